#include "ftrl/federation.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <bit>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ftrl {

namespace {

constexpr char kMagic[4] = {'F', 'T', 'R', 'L'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

// Bounds-checked little-endian reader over a byte buffer.
struct Reader {
    const std::vector<std::uint8_t>& buf;
    std::size_t at = 0;

    void need(std::size_t n, const char* what) const {
        if (at + n > buf.size()) {
            throw ProtocolError(std::string("truncated ") + what + " at byte offset " +
                                std::to_string(at));
        }
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return buf[at++];
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(buf[at + i]) << (8 * i);
        at += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[at + i]) << (8 * i);
        at += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[at + i]) << (8 * i);
        at += 8;
        return v;
    }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
};

}  // namespace

void validate_federation_config(const FederationConfig& cfg) {
    if (!(cfg.federation_cycle > 0.0)) throw ValidationError("federation_cycle must be positive");
    if (!(cfg.sync_cycle > 0.0)) throw ValidationError("sync_cycle must be positive");
    if (cfg.expected_agents < 1) throw ValidationError("expected_agents must be >= 1");
    if (cfg.port < 0 || cfg.port > 65535) {
        throw ValidationError("port must lie in [0, 65535] (0 = ephemeral)");
    }
}

namespace {

// Left-fold mean of one coordinate across models. Equal inputs short-circuit
// to the common value so that averaging N identical models is exact.
void fold_mean(std::vector<double>& acc, const std::vector<ModelParams>& models,
               std::size_t layer, bool bias) {
    const double n = static_cast<double>(models.size());
    for (std::size_t k = 0; k < acc.size(); ++k) {
        const auto& first =
            bias ? models[0].layers[layer].b[k] : models[0].layers[layer].w[k];
        bool all_equal = true;
        double sum = first;
        for (std::size_t i = 1; i < models.size(); ++i) {
            const double v = bias ? models[i].layers[layer].b[k] : models[i].layers[layer].w[k];
            all_equal = all_equal && v == first;
            sum += v;
        }
        acc[k] = all_equal ? first : sum / n;
    }
}

}  // namespace

ModelParams fedavg(const std::vector<ModelParams>& models) {
    if (models.empty()) throw ValidationError("fedavg: empty model list");
    for (std::size_t i = 1; i < models.size(); ++i) {
        if (!same_shape(models[0], models[i])) {
            throw ShapeError("fedavg: model " + std::to_string(i) +
                             " does not match the shape of model 0");
        }
    }
    ModelParams acc = models[0];
    for (std::size_t l = 0; l < acc.layers.size(); ++l) {
        fold_mean(acc.layers[l].w, models, l, false);
        fold_mean(acc.layers[l].b, models, l, true);
    }
    return acc;
}

ModelBundle fedavg_bundles(const std::vector<ModelBundle>& models) {
    std::vector<ModelParams> role_models;
    role_models.reserve(models.size());
    ModelBundle out;
    const auto average = [&](const ModelParams ModelBundle::*role) {
        role_models.clear();
        for (const ModelBundle& m : models) role_models.push_back(m.*role);
        return fedavg(role_models);
    };
    out.actor = average(&ModelBundle::actor);
    out.critic = average(&ModelBundle::critic);
    out.target_actor = average(&ModelBundle::target_actor);
    out.target_critic = average(&ModelBundle::target_critic);
    return out;
}

std::vector<std::uint8_t> encode_envelope(const ModelEnvelope& env) {
    std::vector<std::uint8_t> out;
    out.reserve(kEnvelopeHeaderSize + env.payload.size());
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(env.version);
    out.push_back(static_cast<std::uint8_t>(env.kind));
    put_u32(out, env.agent_id);
    put_u32(out, env.round);
    put_u64(out, env.payload.size());
    out.insert(out.end(), env.payload.begin(), env.payload.end());
    return out;
}

ModelEnvelope decode_envelope(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kEnvelopeHeaderSize) {
        throw ProtocolError("truncated envelope header at byte offset " +
                            std::to_string(bytes.size()));
    }
    for (std::size_t i = 0; i < 4; ++i) {
        if (bytes[i] != static_cast<std::uint8_t>(kMagic[i])) {
            throw ProtocolError("bad magic at byte offset " + std::to_string(i));
        }
    }
    Reader r{bytes, 4};
    ModelEnvelope env;
    env.version = r.u8("version");
    if (env.version != kProtocolVersion) {
        throw ProtocolError("unsupported protocol version " + std::to_string(env.version) +
                            " at byte offset 4");
    }
    const std::uint8_t kind = r.u8("kind");
    if (kind > static_cast<std::uint8_t>(MessageKind::kError)) {
        throw ProtocolError("unknown message kind " + std::to_string(kind) + " at byte offset 5");
    }
    env.kind = static_cast<MessageKind>(kind);
    env.agent_id = r.u32("agent id");
    env.round = r.u32("round");
    const std::uint64_t declared = r.u64("payload length");
    if (declared != bytes.size() - kEnvelopeHeaderSize) {
        throw ProtocolError("payload length " + std::to_string(declared) + " != actual " +
                            std::to_string(bytes.size() - kEnvelopeHeaderSize) +
                            " at byte offset 14");
    }
    env.payload.assign(bytes.begin() + kEnvelopeHeaderSize, bytes.end());
    return env;
}

std::vector<std::uint8_t> encode_networks(
    const std::vector<std::pair<ModelRole, const ModelParams*>>& networks) {
    std::vector<std::uint8_t> out;
    for (const auto& [role, params] : networks) {
        out.push_back(static_cast<std::uint8_t>(role));
        put_u16(out, static_cast<std::uint16_t>(params->layers.size()));
        for (const LayerParams& layer : params->layers) {
            put_u32(out, static_cast<std::uint32_t>(layer.out_dim));
            put_u32(out, static_cast<std::uint32_t>(layer.in_dim));
            for (double v : layer.w) put_f64(out, v);
            for (double v : layer.b) put_f64(out, v);
        }
    }
    return out;
}

std::vector<std::pair<ModelRole, ModelParams>> decode_networks(
    const std::vector<std::uint8_t>& bytes) {
    std::vector<std::pair<ModelRole, ModelParams>> out;
    Reader r{bytes, 0};
    while (r.at < bytes.size()) {
        const std::uint8_t role = r.u8("role tag");
        if (role > static_cast<std::uint8_t>(ModelRole::kTargetCritic)) {
            throw ProtocolError("unknown network role " + std::to_string(role) +
                                " at byte offset " + std::to_string(r.at - 1));
        }
        const std::uint16_t n_layers = r.u16("layer count");
        ModelParams params;
        params.layers.resize(n_layers);
        for (std::uint16_t l = 0; l < n_layers; ++l) {
            LayerParams& layer = params.layers[l];
            layer.out_dim = static_cast<int>(r.u32("layer rows"));
            layer.in_dim = static_cast<int>(r.u32("layer cols"));
            if (layer.out_dim < 1 || layer.in_dim < 1) {
                throw ProtocolError("degenerate layer shape at byte offset " +
                                    std::to_string(r.at - 8));
            }
            const std::size_t n_w =
                static_cast<std::size_t>(layer.out_dim) * static_cast<std::size_t>(layer.in_dim);
            r.need(8 * (n_w + static_cast<std::size_t>(layer.out_dim)), "layer values");
            layer.w.resize(n_w);
            for (double& v : layer.w) v = r.f64("weight");
            layer.b.resize(static_cast<std::size_t>(layer.out_dim));
            for (double& v : layer.b) v = r.f64("bias");
        }
        out.emplace_back(static_cast<ModelRole>(role), std::move(params));
    }
    return out;
}

std::vector<std::uint8_t> encode_model_payload(const ModelBundle& bundle) {
    return encode_networks({{ModelRole::kActor, &bundle.actor},
                            {ModelRole::kCritic, &bundle.critic},
                            {ModelRole::kTargetActor, &bundle.target_actor},
                            {ModelRole::kTargetCritic, &bundle.target_critic}});
}

ModelBundle decode_model_payload(const std::vector<std::uint8_t>& bytes) {
    const auto networks = decode_networks(bytes);
    if (networks.size() != 4) {
        throw ProtocolError("model payload holds " + std::to_string(networks.size()) +
                            " networks, expected 4");
    }
    ModelBundle bundle;
    bool seen[4] = {false, false, false, false};
    for (const auto& [role, params] : networks) {
        const int idx = static_cast<int>(role);
        if (seen[idx]) throw ProtocolError("duplicate network role " + std::to_string(idx));
        seen[idx] = true;
        switch (role) {
            case ModelRole::kActor: bundle.actor = params; break;
            case ModelRole::kCritic: bundle.critic = params; break;
            case ModelRole::kTargetActor: bundle.target_actor = params; break;
            case ModelRole::kTargetCritic: bundle.target_critic = params; break;
        }
    }
    return bundle;
}

void save_model_file(const std::string& path, const ModelBundle& bundle) {
    const auto payload = encode_model_payload(bundle);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open model file for writing: " + path);
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
}

ModelBundle load_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open model file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_model_payload(bytes);
}

void ServerCore::on_push(std::uint32_t agent_id, const ModelBundle& m) {
    std::lock_guard<std::mutex> lock(mu_);
    if (!latest_.empty()) {
        const ModelBundle& ref = latest_.begin()->second;
        if (!same_shape(ref.actor, m.actor) || !same_shape(ref.critic, m.critic)) {
            throw ShapeError("federation: agent " + std::to_string(agent_id) +
                             " pushed a model with mismatched shapes");
        }
    }
    latest_.insert_or_assign(agent_id, m);
}

bool ServerCore::federate(double now) {
    std::lock_guard<std::mutex> lock(mu_);
    if (latest_.empty()) return false;  // nobody has pushed: skip the round
    std::vector<ModelBundle> models;
    models.reserve(latest_.size());
    for (const auto& [id, m] : latest_) models.push_back(m);  // ascending agent id
    FederationSnapshot next;
    next.params = fedavg_bundles(models);
    next.round = ++round_;
    next.created_at = now;
    snap_ = std::move(next);
    return true;
}

std::optional<FederationSnapshot> ServerCore::snapshot() const {
    std::lock_guard<std::mutex> lock(mu_);
    return snap_;
}

long ServerCore::round() const {
    std::lock_guard<std::mutex> lock(mu_);
    return round_;
}

int ServerCore::pushed_agents() const {
    std::lock_guard<std::mutex> lock(mu_);
    return static_cast<int>(latest_.size());
}

bool InProcLink::push_model(const ModelBundle& m) {
    core_->on_push(agent_id_, m);
    return true;
}

std::optional<PullResult> InProcLink::pull_snapshot() {
    PullResult res;
    if (const auto snap = core_->snapshot()) {
        res.round = snap->round;
        res.model = snap->params;
    }
    return res;
}

// --- TCP transport -----------------------------------------------------------

namespace {

bool send_all(int fd, const std::uint8_t* data, std::size_t len) {
    std::size_t sent = 0;
    while (sent < len) {
        const ssize_t n = ::send(fd, data + sent, len - sent, MSG_NOSIGNAL);
        if (n <= 0) return false;
        sent += static_cast<std::size_t>(n);
    }
    return true;
}

bool recv_all(int fd, std::uint8_t* data, std::size_t len) {
    std::size_t got = 0;
    while (got < len) {
        const ssize_t n = ::recv(fd, data + got, len - got, 0);
        if (n <= 0) return false;
        got += static_cast<std::size_t>(n);
    }
    return true;
}

// Reads one framed envelope off the stream; empty optional on EOF/After error.
std::optional<ModelEnvelope> read_envelope(int fd) {
    std::vector<std::uint8_t> bytes(kEnvelopeHeaderSize);
    if (!recv_all(fd, bytes.data(), bytes.size())) return std::nullopt;
    std::uint64_t payload_len = 0;
    for (int i = 0; i < 8; ++i) {
        payload_len |= static_cast<std::uint64_t>(bytes[14 + i]) << (8 * i);
    }
    if (payload_len > (1ULL << 32)) return std::nullopt;  // refuse absurd frames
    bytes.resize(kEnvelopeHeaderSize + payload_len);
    if (payload_len > 0 &&
        !recv_all(fd, bytes.data() + kEnvelopeHeaderSize, payload_len)) {
        return std::nullopt;
    }
    return decode_envelope(bytes);
}

bool write_envelope(int fd, const ModelEnvelope& env) {
    const auto bytes = encode_envelope(env);
    return send_all(fd, bytes.data(), bytes.size());
}

void set_io_timeout(int fd, int seconds) {
    timeval tv{};
    tv.tv_sec = seconds;
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
}

}  // namespace

TcpFederationServer::TcpFederationServer(std::shared_ptr<ServerCore> core, std::string host,
                                         int port, double federation_cycle_s)
    : core_(std::move(core)), host_(std::move(host)), port_(port), cycle_s_(federation_cycle_s) {}

TcpFederationServer::~TcpFederationServer() { stop(); }

void TcpFederationServer::start() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw std::runtime_error("federation server: socket() failed");
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port_));
    if (::inet_pton(AF_INET, host_.c_str(), &addr.sin_addr) != 1) {
        throw std::runtime_error("federation server: bad host " + host_);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw std::runtime_error("federation server: cannot bind " + host_ + ":" +
                                 std::to_string(port_));
    }
    if (port_ == 0) {  // ephemeral port, report the real one
        socklen_t len = sizeof(addr);
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
    }
    if (::listen(listen_fd_, 16) != 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw std::runtime_error("federation server: listen() failed");
    }
    running_.store(true);
    acceptor_ = std::thread(&TcpFederationServer::accept_loop, this);
    timer_ = std::thread(&TcpFederationServer::timer_loop, this);
}

void TcpFederationServer::stop() {
    if (!running_.exchange(false)) return;
    if (listen_fd_ >= 0) {
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        listen_fd_ = -1;
    }
    if (acceptor_.joinable()) acceptor_.join();
    if (timer_.joinable()) timer_.join();
}

void TcpFederationServer::accept_loop() {
    while (running_.load()) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (!running_.load()) break;
            continue;
        }
        set_io_timeout(fd, 10);
        handle_connection(fd);
        ::close(fd);
    }
}

void TcpFederationServer::timer_loop() {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    auto next = start + std::chrono::duration_cast<clock::duration>(
                            std::chrono::duration<double>(cycle_s_));
    while (running_.load()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
        if (clock::now() >= next) {
            const double now_s = std::chrono::duration<double>(clock::now() - start).count();
            core_->federate(now_s);
            next += std::chrono::duration_cast<clock::duration>(
                std::chrono::duration<double>(cycle_s_));
        }
    }
}

void TcpFederationServer::handle_connection(int fd) {
    while (running_.load()) {
        std::optional<ModelEnvelope> req;
        try {
            req = read_envelope(fd);
        } catch (const ProtocolError&) {
            ModelEnvelope err;
            err.kind = MessageKind::kError;
            write_envelope(fd, err);
            return;
        }
        if (!req) return;  // client closed

        ModelEnvelope resp;
        switch (req->kind) {
            case MessageKind::kPushModel:
                try {
                    core_->on_push(req->agent_id, decode_model_payload(req->payload));
                    resp.kind = MessageKind::kAck;
                    resp.round = static_cast<std::uint32_t>(core_->round());
                } catch (const std::exception&) {
                    resp.kind = MessageKind::kError;
                }
                break;
            case MessageKind::kPullRequest: {
                resp.kind = MessageKind::kSnapshot;
                if (const auto snap = core_->snapshot()) {
                    resp.round = static_cast<std::uint32_t>(snap->round);
                    resp.payload = encode_model_payload(snap->params);
                }
                break;
            }
            default:
                resp.kind = MessageKind::kError;
                break;
        }
        resp.agent_id = req->agent_id;
        if (!write_envelope(fd, resp)) return;
    }
}

TcpLink::TcpLink(std::string host, int port, std::uint32_t agent_id)
    : host_(std::move(host)), port_(port), agent_id_(agent_id) {}

std::optional<ModelEnvelope> TcpLink::roundtrip(const ModelEnvelope& request) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return std::nullopt;
    set_io_timeout(fd, 10);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port_));
    if (::inet_pton(AF_INET, host_.c_str(), &addr.sin_addr) != 1 ||
        ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd);
        return std::nullopt;
    }
    std::optional<ModelEnvelope> resp;
    if (write_envelope(fd, request)) {
        try {
            resp = read_envelope(fd);
        } catch (const ProtocolError&) {
            resp = std::nullopt;
        }
    }
    ::close(fd);
    return resp;
}

bool TcpLink::push_model(const ModelBundle& m) {
    ModelEnvelope env;
    env.kind = MessageKind::kPushModel;
    env.agent_id = agent_id_;
    env.payload = encode_model_payload(m);
    const auto resp = roundtrip(env);
    return resp && resp->kind == MessageKind::kAck;
}

std::optional<PullResult> TcpLink::pull_snapshot() {
    ModelEnvelope env;
    env.kind = MessageKind::kPullRequest;
    env.agent_id = agent_id_;
    const auto resp = roundtrip(env);
    if (!resp || resp->kind != MessageKind::kSnapshot) return std::nullopt;
    PullResult res;
    res.round = resp->round;
    if (!resp->payload.empty()) res.model = decode_model_payload(resp->payload);
    return res;
}

std::pair<std::string, int> resolve_server_addr(const std::string& host, int port) {
    if (const char* env = std::getenv("FTRL_SERVER_ADDR")) {
        const std::string addr(env);
        const auto colon = addr.rfind(':');
        if (colon == std::string::npos) {
            throw ConfigError("FTRL_SERVER_ADDR must look like host:port, got '" + addr + "'");
        }
        try {
            return {addr.substr(0, colon), std::stoi(addr.substr(colon + 1))};
        } catch (const std::exception&) {
            throw ConfigError("FTRL_SERVER_ADDR has a bad port: '" + addr + "'");
        }
    }
    return {host, port};
}

}  // namespace ftrl
