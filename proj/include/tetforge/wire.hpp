#pragma once

// Framed request/response protocol spoken with an external prior service.
//
// A frame is a 4-byte little-endian length N followed by N bytes: a UTF-8
// JSON header, one 0x0A byte, then the tensor payload as little-endian
// float32. The header's "nbytes" gives the payload length.
//
//   hello:    {"kind":"hello","proto":1}  ->  {"kind":"hello","proto":1,"model":...}
//   predict:  {"kind":"predict","seq","map","t","prompt","uncond","views","focus","shape","nbytes"}
//   error:    {"kind":"error","msg":...}

#include "tetforge/diffusion.hpp"

#include "json.hpp"

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tetforge::wire {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kMaxFrameBytes = std::size_t(256) << 20;

struct Frame {
    nlohmann::json header;
    std::vector<float> payload;
};

// Full frame bytes including the length prefix. Sets header["nbytes"].
std::vector<std::uint8_t> encode_frame(nlohmann::json header, std::span<const float> payload);
// Inverse of encode_frame; throws ProtocolError on malformed input.
Frame decode_frame(std::span<const std::uint8_t> bytes);
// Body (everything after the length prefix).
Frame decode_body(std::span<const std::uint8_t> body);

nlohmann::json hello_header();
nlohmann::json error_header(const std::string& message);

Frame request_frame(const PriorRequest& request);
PriorRequest request_from_frame(const Frame& frame);
Frame response_frame(const PriorResponse& response, const PriorRequest& request);
// Checks the response against the request it answers.
PriorResponse response_from_frame(const Frame& frame, const PriorRequest& request);

// Blocking socket helpers. Throw ProtocolError on malformed frames and
// PriorError on transport failure.
void send_frame(int fd, const Frame& frame);
Frame receive_frame(int fd);

struct Endpoint {
    std::string host;
    int port = 0;
    std::string str() const { return host + ":" + std::to_string(port); }
};

// Parses "host:port"; throws ConfigError.
Endpoint parse_endpoint(const std::string& text);

// Client side of the protocol. One connection, one request in flight.
class RemotePrior final : public NoisePredictor {
public:
    explicit RemotePrior(Endpoint endpoint, std::chrono::milliseconds timeout = std::chrono::seconds(30));
    ~RemotePrior() override;
    RemotePrior(const RemotePrior&) = delete;
    RemotePrior& operator=(const RemotePrior&) = delete;

    PriorResponse predict(const PriorRequest& request) override;
    std::string identity() const override { return model_; }

private:
    Endpoint endpoint_;
    int fd_ = -1;
    std::string model_;
    std::uint64_t next_seq_ = 1;
};

} // namespace tetforge::wire
