#include <doctest.h>

#include <algorithm>
#include <random>

#include "ftrl/federation.hpp"

using namespace ftrl;

namespace {

MlpSpec tiny_spec() {
    MlpSpec spec;
    spec.layer_sizes = {2, 3, 1};
    return spec;
}

ModelBundle random_bundle(std::uint64_t seed) {
    const AgentNetworks nets = make_networks(4, 1);
    ModelBundle b;
    b.actor = init_params(nets.actor, seed);
    b.critic = init_params(nets.critic, seed + 1);
    b.target_actor = init_params(nets.actor, seed + 2);
    b.target_critic = init_params(nets.critic, seed + 3);
    return b;
}

}  // namespace

TEST_CASE("fedavg: identity on a single model and on N equal models") {
    const ModelParams m = init_params(tiny_spec(), 4);
    CHECK(bitwise_equal(fedavg({m}), m));
    CHECK(bitwise_equal(fedavg({m, m, m, m}), m));
}

TEST_CASE("fedavg: midpoint of two models") {
    const MlpSpec spec{{1, 1}, Activation::kRelu, Activation::kLinear};
    ModelParams a = zeros_like(spec), b = zeros_like(spec);
    a.layers[0].w[0] = 1.0;
    a.layers[0].b[0] = 2.0;
    b.layers[0].w[0] = 3.0;
    b.layers[0].b[0] = 4.0;
    const ModelParams avg = fedavg({a, b});
    CHECK(avg.layers[0].w[0] == 2.0);
    CHECK(avg.layers[0].b[0] == 3.0);
}

TEST_CASE("fedavg: matches the elementwise mean oracle on random sets") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<ModelParams> models;
        const int n = 5;
        for (int i = 0; i < n; ++i) models.push_back(init_params(tiny_spec(), rng()));
        const auto got = flatten(fedavg(models));
        for (std::size_t k = 0; k < got.size(); ++k) {
            double sum = 0.0;
            for (const auto& m : models) sum += flatten(m)[k];
            CHECK(std::abs(got[k] - sum / n) <= 1e-12);
        }
    }
}

TEST_CASE("fedavg: permutation of the input order keeps the result within fp noise") {
    std::mt19937_64 rng(13);
    std::vector<ModelParams> models;
    for (int i = 0; i < 5; ++i) models.push_back(init_params(tiny_spec(), rng()));
    const auto base = flatten(fedavg(models));
    std::reverse(models.begin(), models.end());
    const auto rev = flatten(fedavg(models));
    for (std::size_t k = 0; k < base.size(); ++k) CHECK(std::abs(base[k] - rev[k]) <= 1e-12);
}

TEST_CASE("fedavg: shape mismatch names the offending model") {
    const ModelParams a = init_params(tiny_spec(), 1);
    MlpSpec other;
    other.layer_sizes = {2, 4, 1};
    const ModelParams b = init_params(other, 2);
    CHECK_THROWS_WITH_AS(fedavg({a, b}), doctest::Contains("model 1"), ShapeError);
}

TEST_CASE("envelope: empty ack is a 22-byte frame that round-trips") {
    ModelEnvelope env;
    env.kind = MessageKind::kAck;
    env.agent_id = 2;
    env.round = 7;
    const auto bytes = encode_envelope(env);
    CHECK(bytes.size() == 22);
    const ModelEnvelope back = decode_envelope(bytes);
    CHECK(back.kind == MessageKind::kAck);
    CHECK(back.agent_id == 2);
    CHECK(back.round == 7);
    CHECK(back.payload.empty());
}

TEST_CASE("payload: single 1->1 layer writes the two doubles in order") {
    MlpSpec spec{{1, 1}, Activation::kRelu, Activation::kLinear};
    ModelParams p = zeros_like(spec);
    p.layers[0].w[0] = 2.0;
    p.layers[0].b[0] = 1.0;
    const auto payload = encode_networks({{ModelRole::kActor, &p}});
    // role u8 + count u16 + rows u32 + cols u32 + two f64
    REQUIRE(payload.size() == 1 + 2 + 4 + 4 + 16);
    const auto f64_at = [&](std::size_t at) {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(payload[at + i]) << (8 * i);
        return std::bit_cast<double>(v);
    };
    CHECK(f64_at(11) == 2.0);
    CHECK(f64_at(19) == 1.0);
    const auto decoded = decode_networks(payload);
    REQUIRE(decoded.size() == 1);
    CHECK(decoded[0].first == ModelRole::kActor);
    CHECK(bitwise_equal(decoded[0].second, p));
}

TEST_CASE("payload: bundle round-trips bit-exactly and agrees with flatten order") {
    const ModelBundle bundle = random_bundle(500);
    const auto payload = encode_model_payload(bundle);
    const ModelBundle back = decode_model_payload(payload);
    CHECK(bitwise_equal(back, bundle));

    // The actor block's doubles appear in flatten() order.
    const auto flat = flatten(bundle.actor);
    std::size_t at = 3;  // role + layer count
    std::size_t flat_idx = 0;
    for (const LayerParams& layer : bundle.actor.layers) {
        at += 8;  // rows, cols
        for (std::size_t k = 0; k < layer.w.size() + layer.b.size(); ++k) {
            std::uint64_t v = 0;
            for (int i = 0; i < 8; ++i) {
                v |= static_cast<std::uint64_t>(payload[at + i]) << (8 * i);
            }
            CHECK(std::bit_cast<double>(v) == flat[flat_idx]);
            at += 8;
            ++flat_idx;
        }
    }
}

TEST_CASE("envelope: random payloads round-trip and header corruption is caught") {
    std::mt19937_64 rng(700);
    std::uniform_int_distribution<int> byte(0, 255);
    std::uniform_int_distribution<int> len(0, 300);
    for (int trial = 0; trial < 200; ++trial) {
        ModelEnvelope env;
        env.kind = static_cast<MessageKind>(trial % 5);
        env.agent_id = static_cast<std::uint32_t>(rng());
        env.round = static_cast<std::uint32_t>(rng());
        env.payload.resize(static_cast<std::size_t>(len(rng)));
        for (auto& b : env.payload) b = static_cast<std::uint8_t>(byte(rng));
        const auto bytes = encode_envelope(env);
        const ModelEnvelope back = decode_envelope(bytes);
        CHECK(back.kind == env.kind);
        CHECK(back.agent_id == env.agent_id);
        CHECK(back.round == env.round);
        CHECK(back.payload == env.payload);
    }

    ModelEnvelope env;
    env.kind = MessageKind::kSnapshot;
    env.agent_id = 1;
    env.round = 3;
    env.payload = {9, 9, 9};
    const auto clean = encode_envelope(env);
    // Magic (0..3), version (4), and length (14..21) bytes: every single-byte
    // change must be rejected.
    std::vector<std::size_t> offsets = {0, 1, 2, 3, 4, 14, 15, 16, 17, 18, 19, 20, 21};
    for (std::size_t off : offsets) {
        for (int mask = 1; mask < 256; ++mask) {
            auto bad = clean;
            bad[off] = static_cast<std::uint8_t>(bad[off] ^ mask);
            CHECK_THROWS_AS(decode_envelope(bad), ProtocolError);
        }
    }
    // Truncation is rejected with an offset too.
    auto truncated = clean;
    truncated.resize(10);
    CHECK_THROWS_AS(decode_envelope(truncated), ProtocolError);
}

TEST_CASE("server core: rounds increment and average only the latest pushes") {
    ServerCore core;
    CHECK_FALSE(core.federate(0.0));  // nobody pushed: skip, round stays 0
    CHECK(core.round() == 0);
    CHECK_FALSE(core.snapshot().has_value());

    const ModelBundle m1 = random_bundle(1);
    const ModelBundle m2 = random_bundle(2);
    const ModelBundle m3 = random_bundle(3);
    core.on_push(1, m1);
    core.on_push(2, m2);
    core.on_push(3, m3);
    REQUIRE(core.federate(480.0));
    const auto snap = core.snapshot();
    REQUIRE(snap.has_value());
    CHECK(snap->round == 1);
    CHECK(bitwise_equal(snap->params, fedavg_bundles({m1, m2, m3})));

    // A double push between rounds only counts its latest model.
    const ModelBundle m2b = random_bundle(20);
    core.on_push(2, m2);
    core.on_push(2, m2b);
    REQUIRE(core.federate(960.0));
    CHECK(core.snapshot()->round == 2);
    CHECK(bitwise_equal(core.snapshot()->params, fedavg_bundles({m1, m2b, m3})));
}

TEST_CASE("server core: partial participation averages the agents that pushed") {
    ServerCore core;
    const ModelBundle m1 = random_bundle(31);
    const ModelBundle m2 = random_bundle(32);
    core.on_push(7, m1);
    core.on_push(4, m2);
    REQUIRE(core.federate(1.0));
    // Ascending agent id: 4 then 7.
    CHECK(bitwise_equal(core.snapshot()->params, fedavg_bundles({m2, m1})));
}

TEST_CASE("in-process link: pull of an empty server reports round 0 and no model") {
    auto core = std::make_shared<ServerCore>();
    InProcLink link(core, 1);
    const auto res = link.pull_snapshot();
    REQUIRE(res.has_value());
    CHECK(res->round == 0);
    CHECK_FALSE(res->model.has_value());
}

TEST_CASE("model files: save/load round-trip") {
    const ModelBundle bundle = random_bundle(41);
    const std::string path = "unit_test_model.tmp";
    save_model_file(path, bundle);
    const ModelBundle back = load_model_file(path);
    CHECK(bitwise_equal(back, bundle));
    std::remove(path.c_str());
}

TEST_CASE("tcp transport: push/pull over loopback") {
    auto core = std::make_shared<ServerCore>();
    TcpFederationServer server(core, "127.0.0.1", 0, 3600.0);  // timer effectively off
    server.start();
    TcpLink link("127.0.0.1", server.port(), 5);

    const ModelBundle m = random_bundle(51);
    REQUIRE(link.push_model(m));
    CHECK(core->pushed_agents() == 1);

    auto pulled = link.pull_snapshot();
    REQUIRE(pulled.has_value());
    CHECK(pulled->round == 0);
    CHECK_FALSE(pulled->model.has_value());

    core->federate(1.0);
    pulled = link.pull_snapshot();
    REQUIRE(pulled.has_value());
    CHECK(pulled->round == 1);
    REQUIRE(pulled->model.has_value());
    CHECK(bitwise_equal(*pulled->model, m));
    server.stop();

    // Unreachable server: the link reports failure instead of throwing.
    TcpLink dead("127.0.0.1", server.port(), 5);
    CHECK_FALSE(dead.push_model(m));
    CHECK_FALSE(dead.pull_snapshot().has_value());
}

TEST_CASE("staleness: local training between a federation and the next sync is discarded") {
    // Schedule: sync at t0, federation at t_fed, sync at t1 with t0 < t_fed < t1.
    const AgentNetworks nets = make_networks(4, 1);
    DdpgHyperparams hp;
    hp.batch_size = 4;
    hp.buffer_capacity = 16;
    DdpgAgent agent(nets, hp, 61);
    auto core = std::make_shared<ServerCore>();
    InProcLink link(core, 1);

    Track room;
    room.boundary = {{-20, -20}, {20, -20}, {20, 20}, {-20, 20}};
    room.spawns = {{0, 0, 0}};
    room.scale_label = "standard";
    Environment env(room, EnvParams{}, 3);
    AgentLoop loop(agent, env, TransferProfile{"standard", 1.0, 0.6, true}, &link, 0);

    loop.sync_now();                    // t0: pushes, nothing to adopt yet
    for (int i = 0; i < 6; ++i) loop.step_once();
    core->federate(1.0);                // t_fed
    const ModelBundle snapshot_at_fed = core->snapshot()->params;

    for (int i = 0; i < 6; ++i) loop.step_once();  // stale local progress
    CHECK_FALSE(bitwise_equal(agent.model(), snapshot_at_fed));

    loop.sync_now();                    // t1: adopt, discarding the stale work
    CHECK(bitwise_equal(agent.model(), snapshot_at_fed));
}

TEST_CASE("sync is idempotent without an intervening federation") {
    const AgentNetworks nets = make_networks(4, 1);
    DdpgHyperparams hp;
    hp.batch_size = 32;
    hp.buffer_capacity = 64;
    DdpgAgent agent(nets, hp, 71);
    auto core = std::make_shared<ServerCore>();
    core->on_push(2, agent.model());
    core->federate(0.5);
    InProcLink link(core, 1);

    Track room;
    room.boundary = {{-20, -20}, {20, -20}, {20, 20}, {-20, 20}};
    room.spawns = {{0, 0, 0}};
    room.scale_label = "standard";
    Environment env(room, EnvParams{}, 3);
    AgentLoop loop(agent, env, TransferProfile{"standard", 1.0, 0.6, true}, &link, 0);

    CHECK(loop.sync_now() == 1);
    const ModelBundle after_first = agent.model();
    CHECK(loop.sync_now() == 1);
    CHECK(bitwise_equal(agent.model(), after_first));
}

TEST_CASE("federation config validation") {
    FederationConfig cfg;
    CHECK_NOTHROW(validate_federation_config(cfg));
    cfg.federation_cycle = 0;
    CHECK_THROWS_AS(validate_federation_config(cfg), ValidationError);
    cfg.federation_cycle = 480;
    cfg.expected_agents = 0;
    CHECK_THROWS_AS(validate_federation_config(cfg), ValidationError);
}
