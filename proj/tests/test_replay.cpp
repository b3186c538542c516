#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "hyc/mock.hpp"
#include "hyc/replay.hpp"

using namespace hyc;
using namespace hyc_test;

namespace {

ReplayScript golden_script() {
    return build_script(decode_capture(golden_capture_bytes()));
}

/// Golden script with the username span marked and short reply windows so a
/// missing terminator cannot stall the suite.
ReplayScript marked_golden_script(int timeout_ms = 300) {
    ReplayScript s = mark_placeholder(golden_script(), 0, 5, 9, "user");
    for (auto& step : s.steps) step.reply_timeout_ms = timeout_ms;
    return s;
}

Session random_client_session(std::mt19937& rng) {
    Session s;
    s.session_id = random_session_id();
    s.opened_us = 5;
    std::uniform_int_distribution<std::size_t> count(1, 8), len(1, 40);
    std::size_t n = count(rng);
    for (std::size_t seq = 0; seq < n; ++seq) {
        Bytes payload(len(rng));
        for (auto& b : payload) b = static_cast<std::uint8_t>(rng());
        s.packets.push_back({seq, seq,
                             rng() % 3 == 0 ? Direction::ServerToClient
                                            : Direction::ClientToServer,
                             std::move(payload)});
    }
    return s;
}

Bytes client_stream_of(const ReplayScript& script,
                       std::span<const Substitution> bindings) {
    Bytes out;
    for (const auto& step : script.steps) {
        Bytes rendered = render_step(step, bindings);
        out.insert(out.end(), rendered.begin(), rendered.end());
    }
    return out;
}

}  // namespace

TEST_CASE("build_script turns the golden session into two answered steps") {
    ReplayScript script = golden_script();
    Session golden = decode_capture(golden_capture_bytes());

    CHECK(script.source_session == golden.session_id);
    REQUIRE(script.steps.size() == 2);
    CHECK(script.steps[0].template_bytes == to_bytes("AUTH demo demo-pass\n"));
    CHECK(script.steps[0].expect_reply);
    CHECK(script.steps[0].placeholders.empty());
    CHECK(script.steps[1].template_bytes == to_bytes("GET contacts\n"));
    CHECK(script.steps[1].expect_reply);
}

TEST_CASE("a trailing unanswered client packet expects no reply") {
    Session s = decode_capture(golden_capture_bytes());
    s.packets.push_back({4, s.opened_us + 500, Direction::ClientToServer,
                         to_bytes("QUIT\n")});
    ReplayScript script = build_script(s);
    REQUIRE(script.steps.size() == 3);
    CHECK(script.steps[0].expect_reply);
    CHECK(script.steps[1].expect_reply);
    CHECK(!script.steps[2].expect_reply);
}

TEST_CASE("consecutive client packets expect no reply except the last") {
    Session s;
    s.session_id = random_session_id();
    s.packets.push_back({0, 1, Direction::ClientToServer, to_bytes("a")});
    s.packets.push_back({1, 2, Direction::ClientToServer, to_bytes("b")});
    s.packets.push_back({2, 3, Direction::ServerToClient, to_bytes("r")});
    ReplayScript script = build_script(s);
    REQUIRE(script.steps.size() == 2);
    CHECK(!script.steps[0].expect_reply);
    CHECK(script.steps[1].expect_reply);
}

TEST_CASE("a session without client packets cannot become a script") {
    Session s;
    s.packets.push_back({0, 1, Direction::ServerToClient, to_bytes("hi")});
    CHECK_THROWS_AS(build_script(s), EmptyClientStream);
    CHECK_THROWS_AS(build_script(Session{}), EmptyClientStream);
}

TEST_CASE("marking the username span and rebinding it") {
    ReplayScript marked = mark_placeholder(golden_script(), 0, 5, 9, "user");
    REQUIRE(marked.steps[0].placeholders.size() == 1);
    CHECK(marked.steps[0].placeholders[0] == Placeholder{"user", 5, 9});

    // Identity binding reproduces the original line.
    std::vector<Substitution> demo{{"user", to_bytes("demo")}};
    CHECK(render_step(marked.steps[0], demo) == to_bytes("AUTH demo demo-pass\n"));

    // A longer value shifts the tail without touching it.
    std::vector<Substitution> alice{{"user", to_bytes("alice")}};
    CHECK(render_step(marked.steps[0], alice) == to_bytes("AUTH alice demo-pass\n"));

    // An empty value deletes the span.
    std::vector<Substitution> none{{"user", Bytes{}}};
    CHECK(render_step(marked.steps[0], none) == to_bytes("AUTH  demo-pass\n"));

    // The input script is untouched.
    CHECK(golden_script().steps[0].placeholders.empty());
}

TEST_CASE("mark_placeholder rejects bad spans and names") {
    ReplayScript script = golden_script();
    CHECK_THROWS_AS(mark_placeholder(script, 5, 0, 1, "x"), RangeOutOfBounds);
    CHECK_THROWS_AS(mark_placeholder(script, 0, 5, 99, "x"), RangeOutOfBounds);
    CHECK_THROWS_AS(mark_placeholder(script, 0, 9, 5, "x"), RangeOutOfBounds);
    CHECK_THROWS_AS(mark_placeholder(script, 0, 5, 5, "x"), RangeOutOfBounds);
    CHECK_THROWS_AS(mark_placeholder(script, 0, 0,
                                     script.steps[0].template_bytes.size() + 1, "x"),
                    RangeOutOfBounds);
    CHECK_THROWS_AS(mark_placeholder(script, 0, 5, 9, "bad name"),
                    std::invalid_argument);
    CHECK_THROWS_AS(mark_placeholder(script, 0, 5, 9, ""), std::invalid_argument);
    CHECK_THROWS_AS(mark_placeholder(script, 0, 5, 9, "1x"), std::invalid_argument);

    ReplayScript marked = mark_placeholder(script, 0, 5, 9, "user");
    CHECK_THROWS_AS(mark_placeholder(marked, 0, 7, 12, "other"),
                    OverlappingPlaceholder);
    CHECK_THROWS_AS(mark_placeholder(marked, 0, 0, 6, "head_overlap_end"),
                    OverlappingPlaceholder);
    // Same name anywhere in the script collides, even on another step.
    CHECK_THROWS_AS(mark_placeholder(marked, 1, 0, 3, "user"), DuplicateName);

    // Adjacent spans are legal; placeholders stay sorted by start.
    ReplayScript twice = mark_placeholder(marked, 0, 10, 19, "secret");
    ReplayScript head = mark_placeholder(twice, 0, 0, 4, "verb");
    REQUIRE(head.steps[0].placeholders.size() == 3);
    CHECK(head.steps[0].placeholders[0].name == "verb");
    CHECK(head.steps[0].placeholders[1].name == "user");
    CHECK(head.steps[0].placeholders[2].name == "secret");
}

TEST_CASE("rendering demands exactly the placeholder names") {
    ReplayStep step = marked_golden_script().steps[0];
    CHECK_THROWS_AS(render_step(step, std::vector<Substitution>{}),
                    UnboundPlaceholder);
}

TEST_CASE("render identity: an unmarked script reproduces the client stream") {
    std::mt19937 rng(7401);
    for (int i = 0; i < 100; ++i) {
        Session s = random_client_session(rng);
        bool has_client = false;
        for (const auto& p : s.packets)
            has_client |= p.direction == Direction::ClientToServer;
        if (!has_client) continue;
        ReplayScript script = build_script(s);
        CAPTURE(i);
        CHECK(client_stream_of(script, {}) == concat_raw(s, Direction::ClientToServer));
    }
}

TEST_CASE("splice arithmetic on randomized placeholders") {
    std::mt19937 rng(7402);
    for (int round = 0; round < 200; ++round) {
        std::uniform_int_distribution<std::size_t> len(2, 60);
        ReplayStep step;
        step.template_bytes.resize(len(rng));
        for (auto& b : step.template_bytes) b = static_cast<std::uint8_t>(rng());

        // Carve non-overlapping spans left to right.
        std::vector<Substitution> bindings;
        std::size_t pos = 0;
        int idx = 0;
        while (pos + 1 < step.template_bytes.size() && rng() % 2) {
            std::uniform_int_distribution<std::size_t> s_dist(
                pos, step.template_bytes.size() - 1);
            std::size_t start = s_dist(rng);
            std::uniform_int_distribution<std::size_t> e_dist(
                start + 1, step.template_bytes.size());
            std::size_t end = e_dist(rng);
            std::string name = "p" + std::to_string(idx++);
            step.placeholders.push_back({name, start, end});
            Bytes value(rng() % 8, 0);
            for (auto& b : value) b = static_cast<std::uint8_t>(rng());
            bindings.push_back({name, value});
            pos = end;
        }

        Bytes rendered = render_step(step, bindings);

        std::size_t expected_len = step.template_bytes.size();
        for (std::size_t i = 0; i < step.placeholders.size(); ++i)
            expected_len += bindings[i].value.size() -
                            (step.placeholders[i].end - step.placeholders[i].start);
        REQUIRE(rendered.size() == expected_len);

        // Reassemble independently: verbatim gaps + bound values.
        Bytes expect;
        std::size_t cursor = 0;
        for (std::size_t i = 0; i < step.placeholders.size(); ++i) {
            const auto& ph = step.placeholders[i];
            expect.insert(expect.end(), step.template_bytes.begin() + static_cast<std::ptrdiff_t>(cursor),
                          step.template_bytes.begin() + static_cast<std::ptrdiff_t>(ph.start));
            expect.insert(expect.end(), bindings[i].value.begin(), bindings[i].value.end());
            cursor = ph.end;
        }
        expect.insert(expect.end(), step.template_bytes.begin() + static_cast<std::ptrdiff_t>(cursor),
                      step.template_bytes.end());
        CHECK(rendered == expect);
    }
}

TEST_CASE("script files roundtrip") {
    ReplayScript script = marked_golden_script(700);
    script = mark_placeholder(script, 1, 4, 12, "table");
    std::string text = script.serialize();
    CHECK(ReplayScript::parse(text) == script);

    // Defaults apply when optional keys are missing.
    ReplayScript sparse = ReplayScript::parse(
        "source 000102030405060708090a0b0c0d0e0f\n"
        "step 0 payload_hex=61\n");
    REQUIRE(sparse.steps.size() == 1);
    CHECK(sparse.steps[0].expect_reply);
    CHECK(sparse.steps[0].reply_timeout_ms == 2000);

    CHECK_THROWS_AS(ReplayScript::parse("step 0 payload_hex=61\n"),
                    std::invalid_argument);
    CHECK_THROWS_AS(ReplayScript::parse("source 00\n"), std::invalid_argument);
    CHECK_THROWS_AS(
        ReplayScript::parse("source 000102030405060708090a0b0c0d0e0f\n"
                            "step 1 payload_hex=61\n"),
        std::invalid_argument);
    CHECK_THROWS_AS(
        ReplayScript::parse("source 000102030405060708090a0b0c0d0e0f\n"
                            "step 0 payload_hex=61\n"
                            "placeholder 0 0 5 x\n"),
        RangeOutOfBounds);
    CHECK_THROWS_AS(
        ReplayScript::parse("source 000102030405060708090a0b0c0d0e0f\n"
                            "step 0 payload_hex=6162 timeout_ms=0\n"),
        std::invalid_argument);
    // A placeholder line may only follow its step line.
    CHECK_THROWS_AS(
        ReplayScript::parse("source 000102030405060708090a0b0c0d0e0f\n"
                            "placeholder 0 0 1 x\n"
                            "step 0 payload_hex=61\n"),
        RangeOutOfBounds);
}

TEST_CASE("identity replay against the mock server reproduces the s2c stream") {
    MockServer server("127.0.0.1:0", MockDataset::fixture());
    Session golden = decode_capture(golden_capture_bytes());

    ReplayScript script = golden_script();
    for (auto& step : script.steps) step.reply_timeout_ms = 400;

    ReplayResult result = run_replay(script, {}, server.endpoint().str());
    CHECK(concat_raw(result.session, Direction::ClientToServer) ==
          concat_raw(golden, Direction::ClientToServer));
    CHECK(concat_raw(result.session, Direction::ServerToClient) ==
          concat_raw(golden, Direction::ServerToClient));

    // The AUTH reply carries no 0x04, so that step's window closes on the
    // timeout; the bytes were still collected.
    CHECK(result.timed_out_steps == std::vector<std::size_t>{0});

    // The recorded session is a valid capture in its own right.
    Session reparsed = decode_capture(encode_capture(result.session));
    CHECK(reparsed.packets.size() == result.session.packets.size());
}

TEST_CASE("line terminators avoid reply-window timeouts entirely") {
    MockServer server("127.0.0.1:0", MockDataset::fixture());
    ReplayScript script = golden_script();
    for (auto& step : script.steps) step.reply_timeout_ms = 2000;

    ReplayOptions options;
    options.reply_terminators = {0x0a, 0x04};
    ReplayResult result = run_replay(script, {}, server.endpoint().str(), options);
    CHECK(result.timed_out_steps.empty());
    REQUIRE(result.session.packets.size() >= 2);
    // First reply is the full OK line.
    Bytes first_reply;
    for (const auto& p : result.session.packets)
        if (p.direction == Direction::ServerToClient) {
            first_reply = p.payload;
            break;
        }
    CHECK(first_reply == to_bytes("OK LIC-0001\n"));
}

TEST_CASE("rebinding the username to an unknown name is refused upstream") {
    MockServer server("127.0.0.1:0", MockDataset::fixture());
    ReplayScript script = marked_golden_script(300);

    std::vector<Substitution> mallory{{"user", to_bytes("mallory")}};
    ReplayResult result = run_replay(script, mallory, server.endpoint().str());

    Bytes c2s = concat_raw(result.session, Direction::ClientToServer);
    CHECK(c2s == to_bytes("AUTH mallory demo-pass\nGET contacts\n"));
    Bytes s2c = concat_raw(result.session, Direction::ServerToClient);
    CHECK(s2c == to_bytes("ERR auth\nERR auth\n"));
}

TEST_CASE("binding validation happens before any connection") {
    // Address that would fail to connect; UnboundPlaceholder must win.
    std::string dead_addr;
    {
        Listener probe = Listener::bind("127.0.0.1:0");
        dead_addr = probe.local().str();
    }
    ReplayScript script = marked_golden_script(300);

    CHECK_THROWS_AS(run_replay(script, {}, dead_addr), UnboundPlaceholder);

    std::vector<Substitution> unknown{{"user", to_bytes("demo")},
                                      {"ghost", to_bytes("x")}};
    CHECK_THROWS_AS(run_replay(script, unknown, dead_addr), std::invalid_argument);

    std::vector<Substitution> doubled{{"user", to_bytes("a")},
                                      {"user", to_bytes("b")}};
    CHECK_THROWS_AS(run_replay(script, doubled, dead_addr), std::invalid_argument);

    // With a well-formed binding the dead endpoint surfaces as ConnectFailed.
    std::vector<Substitution> ok{{"user", to_bytes("demo")}};
    CHECK_THROWS_AS(run_replay(script, ok, dead_addr), ConnectFailed);
}

TEST_CASE("a peer close mid-run returns the partial session") {
    MockServer server("127.0.0.1:0", MockDataset::fixture());

    // Step 0 violates the protocol, so the server replies ERR proto and
    // closes; step 1 can never be delivered.
    Session s;
    s.session_id = random_session_id();
    s.packets.push_back({0, 1, Direction::ClientToServer, to_bytes("HELO x\n")});
    s.packets.push_back({1, 2, Direction::ServerToClient, to_bytes("ERR proto\n")});
    s.packets.push_back({2, 3, Direction::ClientToServer, to_bytes("GET contacts\n")});
    s.packets.push_back({3, 4, Direction::ServerToClient, to_bytes("never\n")});

    ReplayScript script = build_script(s);
    for (auto& step : script.steps) step.reply_timeout_ms = 400;
    ReplayOptions options;
    options.reply_terminators = {0x0a, 0x04};

    ReplayResult result = run_replay(script, {}, server.endpoint().str(), options);
    Bytes s2c = concat_raw(result.session, Direction::ServerToClient);
    CHECK(s2c == to_bytes("ERR proto\n"));
}
