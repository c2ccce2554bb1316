#include "tetforge/wire.hpp"

#include "tetforge/error.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>

namespace tetforge::wire {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "wire encoding assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

template <typename T>
T field(const json& h, const char* key) {
    auto it = h.find(key);
    if (it == h.end()) throw ProtocolError(std::string("frame header lacks '") + key + "'");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ProtocolError(std::string("frame header field '") + key + "' has the wrong type");
    }
}

void write_all(int fd, const std::uint8_t* p, std::size_t n) {
    while (n > 0) {
        const ssize_t k = ::send(fd, p, n, MSG_NOSIGNAL);
        if (k < 0 && errno == EINTR) continue;
        if (k <= 0) throw PriorError(std::string("send failed: ") + std::strerror(errno));
        p += k;
        n -= std::size_t(k);
    }
}

void read_all(int fd, std::uint8_t* p, std::size_t n) {
    while (n > 0) {
        const ssize_t k = ::recv(fd, p, n, 0);
        if (k < 0 && errno == EINTR) continue;
        if (k == 0) throw PriorError("connection closed by peer");
        if (k < 0) throw PriorError(std::string("receive failed: ") + std::strerror(errno));
        p += k;
        n -= std::size_t(k);
    }
}

} // namespace

std::vector<std::uint8_t> encode_frame(json header, std::span<const float> payload) {
    header["nbytes"] = payload.size() * sizeof(float);
    const std::string text = header.dump();
    const std::size_t body = text.size() + 1 + payload.size_bytes();
    if (body > kMaxFrameBytes) throw ProtocolError("frame too large");
    std::vector<std::uint8_t> out;
    out.reserve(4 + body);
    put_u32(out, std::uint32_t(body));
    out.insert(out.end(), text.begin(), text.end());
    out.push_back('\n');
    const auto* raw = reinterpret_cast<const std::uint8_t*>(payload.data());
    out.insert(out.end(), raw, raw + payload.size_bytes());
    return out;
}

Frame decode_body(std::span<const std::uint8_t> body) {
    const auto nl = std::find(body.begin(), body.end(), std::uint8_t('\n'));
    if (nl == body.end()) throw ProtocolError("frame header is not newline terminated");
    Frame f;
    try {
        f.header = json::parse(body.begin(), nl);
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("frame header is not valid JSON: ") + e.what());
    }
    if (!f.header.is_object()) throw ProtocolError("frame header is not a JSON object");
    const std::size_t header_len = std::size_t(nl - body.begin());
    const std::size_t rest = body.size() - header_len - 1;
    const std::size_t nbytes = f.header.contains("nbytes") ? field<std::size_t>(f.header, "nbytes") : 0;
    if (nbytes != rest) throw ProtocolError("frame payload length does not match its header");
    if (nbytes % sizeof(float) != 0) throw ProtocolError("frame payload is not a whole number of float32 values");
    f.payload.resize(nbytes / sizeof(float));
    if (nbytes) std::memcpy(f.payload.data(), &*(nl + 1), nbytes);
    return f;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw ProtocolError("frame shorter than its length prefix");
    const std::uint32_t n = get_u32(bytes.data());
    if (n > kMaxFrameBytes) throw ProtocolError("frame too large");
    if (bytes.size() != 4 + std::size_t(n)) throw ProtocolError("frame length prefix does not match its size");
    return decode_body(bytes.subspan(4));
}

json hello_header() { return json{{"kind", "hello"}, {"proto", kProtocolVersion}}; }

json error_header(const std::string& message) { return json{{"kind", "error"}, {"msg", message}}; }

Frame request_frame(const PriorRequest& r) {
    r.validate();
    Frame f;
    json views = json::array();
    for (const auto& v : r.views) views.push_back({v.azimuth_deg, v.elevation_deg});
    f.header = json{{"kind", "predict"},
                    {"seq", r.seq},
                    {"map", map_kind_name(r.kind)},
                    {"t", r.t},
                    {"prompt", r.unconditional ? std::string() : r.prompt},
                    {"uncond", r.unconditional},
                    {"views", views},
                    {"focus", r.focus},
                    {"shape", {r.views.size(), r.height, r.width, r.channels()}},
                    {"nbytes", r.tensors.size() * sizeof(float)}};
    f.payload.assign(r.tensors.begin(), r.tensors.end());
    return f;
}

PriorRequest request_from_frame(const Frame& f) {
    if (field<std::string>(f.header, "kind") != "predict") throw ProtocolError("expected a predict frame");
    PriorRequest r;
    r.seq = field<std::uint64_t>(f.header, "seq");
    r.kind = parse_map_kind(field<std::string>(f.header, "map"));
    r.t = field<int>(f.header, "t");
    r.prompt = field<std::string>(f.header, "prompt");
    r.unconditional = field<bool>(f.header, "uncond");
    for (const auto& v : field<std::vector<std::array<double, 2>>>(f.header, "views")) r.views.push_back({v[0], v[1]});
    r.focus = field<std::size_t>(f.header, "focus");
    const auto shape = field<std::vector<std::size_t>>(f.header, "shape");
    if (shape.size() != 4 || shape[0] != r.views.size() || int(shape[3]) != map_channels(r.kind)) {
        throw ProtocolError("predict frame shape is inconsistent");
    }
    r.height = int(shape[1]);
    r.width = int(shape[2]);
    r.tensors.assign(f.payload.begin(), f.payload.end());
    try {
        r.validate();
    } catch (const ContractError& e) {
        throw ProtocolError(e.what());
    }
    return r;
}

Frame response_frame(const PriorResponse& response, const PriorRequest& request) {
    Frame f;
    f.header = json{{"kind", "predict"},
                    {"seq", response.seq},
                    {"shape", {request.views.size(), request.height, request.width, request.channels()}},
                    {"nbytes", response.noise.size() * sizeof(float)}};
    f.payload.assign(response.noise.begin(), response.noise.end());
    return f;
}

PriorResponse response_from_frame(const Frame& f, const PriorRequest& request) {
    const auto kind = field<std::string>(f.header, "kind");
    if (kind == "error") throw PriorError("prior service error: " + field<std::string>(f.header, "msg"));
    if (kind != "predict") throw ProtocolError("unexpected frame kind '" + kind + "'");
    PriorResponse r;
    r.seq = field<std::uint64_t>(f.header, "seq");
    if (r.seq != request.seq) throw ProtocolError("response sequence number does not match the request");
    const auto shape = field<std::vector<std::size_t>>(f.header, "shape");
    const std::vector<std::size_t> expect{request.views.size(), std::size_t(request.height),
                                          std::size_t(request.width), std::size_t(request.channels())};
    if (shape != expect || f.payload.size() != request.tensors.size()) {
        throw ProtocolError("response shape does not match the request");
    }
    r.noise.assign(f.payload.begin(), f.payload.end());
    for (double x : r.noise)
        if (!std::isfinite(x)) throw PriorError("prior returned non-finite values");
    return r;
}

void send_frame(int fd, const Frame& frame) {
    const auto bytes = encode_frame(frame.header, frame.payload);
    write_all(fd, bytes.data(), bytes.size());
}

Frame receive_frame(int fd) {
    std::uint8_t len[4];
    read_all(fd, len, 4);
    const std::uint32_t n = get_u32(len);
    if (n > kMaxFrameBytes) throw ProtocolError("frame too large");
    std::vector<std::uint8_t> body(n);
    read_all(fd, body.data(), n);
    return decode_body(body);
}

Endpoint parse_endpoint(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
        throw ConfigError("endpoint must be host:port, got '" + text + "'");
    }
    Endpoint e;
    e.host = text.substr(0, colon);
    try {
        std::size_t used = 0;
        e.port = std::stoi(text.substr(colon + 1), &used);
        if (used != text.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ConfigError("endpoint port is not a number: '" + text + "'");
    }
    if (e.port < 1 || e.port > 65535) throw ConfigError("endpoint port out of range: '" + text + "'");
    return e;
}

RemotePrior::RemotePrior(Endpoint endpoint, std::chrono::milliseconds timeout) : endpoint_(std::move(endpoint)) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(endpoint_.port);
    if (int rc = ::getaddrinfo(endpoint_.host.c_str(), port.c_str(), &hints, &res); rc != 0) {
        throw PriorError("cannot resolve " + endpoint_.str() + ": " + ::gai_strerror(rc));
    }
    std::string last = "no address";
    for (addrinfo* a = res; a; a = a->ai_next) {
        const int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) {
            fd_ = fd;
            break;
        }
        last = std::strerror(errno);
        ::close(fd);
    }
    ::freeaddrinfo(res);
    if (fd_ < 0) throw PriorError("cannot connect to " + endpoint_.str() + ": " + last);

    timeval tv{};
    tv.tv_sec = long(timeout.count() / 1000);
    tv.tv_usec = long(timeout.count() % 1000) * 1000;
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    const int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);

    try {
        send_frame(fd_, Frame{hello_header(), {}});
        const Frame reply = receive_frame(fd_);
        const auto kind = reply.header.value("kind", std::string());
        if (kind == "error") throw ProtocolError("protocol mismatch: " + reply.header.value("msg", std::string()));
        if (kind != "hello" || reply.header.value("proto", -1) != kProtocolVersion) {
            throw ProtocolError("protocol mismatch with " + endpoint_.str());
        }
        model_ = reply.header.value("model", std::string("unknown"));
    } catch (...) {
        ::close(fd_);
        fd_ = -1;
        throw;
    }
}

RemotePrior::~RemotePrior() {
    if (fd_ >= 0) ::close(fd_);
}

PriorResponse RemotePrior::predict(const PriorRequest& request) {
    if (fd_ < 0) throw PriorError("connection to " + endpoint_.str() + " is closed", false);
    PriorRequest wire_request = request;
    wire_request.seq = next_seq_++;
    PriorResponse r;
    try {
        send_frame(fd_, request_frame(wire_request));
        r = response_from_frame(receive_frame(fd_), wire_request);
    } catch (const PriorError&) {
        // A failed exchange leaves the stream position unknown.
        ::close(fd_);
        fd_ = -1;
        throw;
    }
    r.seq = request.seq;
    return r;
}

} // namespace tetforge::wire
