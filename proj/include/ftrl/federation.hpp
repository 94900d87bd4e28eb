#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ftrl/agent.hpp"
#include "ftrl/nn.hpp"

namespace ftrl {

enum class ClockMode { kVirtual, kWall };

struct FederationConfig {
    double federation_cycle = 480.0;  // t_f: virtual steps, or seconds in wall mode
    double sync_cycle = 720.0;        // t_u
    int expected_agents = 1;
    ClockMode clock_mode = ClockMode::kVirtual;
    std::string host = "127.0.0.1";
    int port = 47815;
};

void validate_federation_config(const FederationConfig& cfg);

struct FederationSnapshot {
    long round = 0;
    ModelBundle params;
    double created_at = 0.0;  // virtual step or wall seconds
};

// Elementwise arithmetic mean, summed as a left fold in list order.
// Throws ShapeError (naming the model index) on shape disagreement.
ModelParams fedavg(const std::vector<ModelParams>& models);
ModelBundle fedavg_bundles(const std::vector<ModelBundle>& models);

// --- wire protocol -----------------------------------------------------------

enum class MessageKind : std::uint8_t {
    kPushModel = 0,
    kPullRequest = 1,
    kSnapshot = 2,
    kAck = 3,
    kError = 4,
};

inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kEnvelopeHeaderSize = 22;  // magic+ver+kind+agent+round+len

struct ModelEnvelope {
    std::uint8_t version = kProtocolVersion;
    MessageKind kind = MessageKind::kAck;
    std::uint32_t agent_id = 0;
    std::uint32_t round = 0;
    std::vector<std::uint8_t> payload;
};

// Frame layout: magic "FTRL", version u8, kind u8, agent id u32 LE,
// round u32 LE, payload length u64 LE, payload bytes.
std::vector<std::uint8_t> encode_envelope(const ModelEnvelope& env);
// Throws ProtocolError with the offending byte offset.
ModelEnvelope decode_envelope(const std::vector<std::uint8_t>& bytes);

enum class ModelRole : std::uint8_t {
    kActor = 0,
    kCritic = 1,
    kTargetActor = 2,
    kTargetCritic = 3,
};

// Payload block: per network, role tag u8, layer count u16 LE, then per layer
// rows u32 LE, cols u32 LE, row-major weight doubles LE, bias doubles LE.
std::vector<std::uint8_t> encode_networks(
    const std::vector<std::pair<ModelRole, const ModelParams*>>& networks);
std::vector<std::pair<ModelRole, ModelParams>> decode_networks(
    const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> encode_model_payload(const ModelBundle& bundle);
ModelBundle decode_model_payload(const std::vector<std::uint8_t>& bytes);

// Checkpoint files hold exactly the wire payload block.
void save_model_file(const std::string& path, const ModelBundle& bundle);
ModelBundle load_model_file(const std::string& path);

// --- server ------------------------------------------------------------------

// Transport-free federation state: latest push per agent, FedAvg on demand,
// atomically replaced snapshot. Shared by the in-process and TCP front ends.
class ServerCore {
  public:
    void on_push(std::uint32_t agent_id, const ModelBundle& m);

    // Aggregates the latest push of every agent that pushed at least once
    // (ascending agent id). Returns false (and keeps the round) when nobody
    // has pushed yet.
    bool federate(double now);

    std::optional<FederationSnapshot> snapshot() const;
    long round() const;
    int pushed_agents() const;

  private:
    mutable std::mutex mu_;
    std::map<std::uint32_t, ModelBundle> latest_;
    std::optional<FederationSnapshot> snap_;
    long round_ = 0;
};

// Virtual-clock federation link: direct calls into a shared ServerCore.
class InProcLink final : public FederationLink {
  public:
    InProcLink(std::shared_ptr<ServerCore> core, std::uint32_t agent_id)
        : core_(std::move(core)), agent_id_(agent_id) {}

    bool push_model(const ModelBundle& m) override;
    std::optional<PullResult> pull_snapshot() override;

  private:
    std::shared_ptr<ServerCore> core_;
    std::uint32_t agent_id_;
};

// --- wall-clock transport ----------------------------------------------------

// Blocking TCP front end for ServerCore: an acceptor thread answering
// push/pull envelopes plus a timer thread federating every t_f seconds.
class TcpFederationServer {
  public:
    TcpFederationServer(std::shared_ptr<ServerCore> core, std::string host, int port,
                        double federation_cycle_s);
    ~TcpFederationServer();

    void start();
    void stop();
    int port() const { return port_; }
    std::shared_ptr<ServerCore> core() const { return core_; }

  private:
    void accept_loop();
    void timer_loop();
    void handle_connection(int fd);

    std::shared_ptr<ServerCore> core_;
    std::string host_;
    int port_;
    double cycle_s_;
    int listen_fd_ = -1;
    std::atomic<bool> running_{false};
    std::thread acceptor_;
    std::thread timer_;
};

// TCP client: one connection per request, silent failure reported through the
// FederationLink contract so agents degrade to solo training.
class TcpLink final : public FederationLink {
  public:
    TcpLink(std::string host, int port, std::uint32_t agent_id);

    bool push_model(const ModelBundle& m) override;
    std::optional<PullResult> pull_snapshot() override;

  private:
    std::optional<ModelEnvelope> roundtrip(const ModelEnvelope& request);

    std::string host_;
    int port_;
    std::uint32_t agent_id_;
};

// host:port from config, overridden by the FTRL_SERVER_ADDR env var.
std::pair<std::string, int> resolve_server_addr(const std::string& host, int port);

}  // namespace ftrl
