// hyc: capture proxy, credential sniffer, extractor, replay driver, and the
// mock HDP/0 pair behind one binary.
//
// Exit codes: 0 success, 1 operational error, 2 usage error.

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "hyc/capture.hpp"
#include "hyc/cleanse.hpp"
#include "hyc/mock.hpp"
#include "hyc/net.hpp"
#include "hyc/proxy.hpp"
#include "hyc/replay.hpp"
#include "hyc/sniff.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

void wait_for_stop() {
    while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

void write_output(const std::string& out_path, std::string_view data) {
    if (out_path.empty()) {
        std::cout.write(data.data(), static_cast<std::streamsize>(data.size()));
        std::cout.flush();
        return;
    }
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + out_path + " for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw std::runtime_error("write failed: " + out_path);
}

/// "name=value" with value taken verbatim or hex-decoded.
hyc::Substitution parse_binding(const std::string& arg, bool hex) {
    std::size_t eq = arg.find('=');
    if (eq == std::string::npos || eq == 0)
        throw CLI::ValidationError("--bind", "expected name=value, got '" + arg + "'");
    hyc::Substitution sub;
    sub.name = arg.substr(0, eq);
    std::string value = arg.substr(eq + 1);
    sub.value = hex ? hyc::from_hex(value) : hyc::to_bytes(value);
    return sub;
}

void cmd_proxy(const std::string& listen, const std::string& upstream,
               const std::string& capture_dir, const std::string& rules_path,
               bool show_secrets) {
    hyc::ProxyConfig config;
    config.listen_addr = listen;
    config.upstream_addr = upstream;
    config.capture_path = capture_dir;
    if (!rules_path.empty())
        config.sniff_rules = hyc::SniffRuleSet::parse_file(rules_path);
    std::filesystem::create_directories(config.capture_path);

    hyc::Proxy proxy(
        config,
        [show_secrets](const hyc::SessionSummary& s) {
            std::cout << s.ndjson(show_secrets) << '\n' << std::flush;
        },
        [](const std::string& line) { std::cerr << line << '\n'; });
    proxy.start();
    std::cerr << "listening " << proxy.listen_endpoint().str() << '\n' << std::flush;
    wait_for_stop();
    proxy.stop();
}

void cmd_sniff(const std::string& capture, const std::string& rules_path,
               bool show_secrets) {
    hyc::SniffRuleSet rules;
    if (!rules_path.empty()) rules = hyc::SniffRuleSet::parse_file(rules_path);
    hyc::Session session = hyc::read_capture_file(capture);
    for (const auto& hit : hyc::sniff_credentials(session, rules)) {
        nlohmann::ordered_json j;
        j["session_id"] = hyc::session_id_hex(hit.session_id);
        j["seq"] = hit.packet_seq;
        j["username"] = hit.username;
        if (show_secrets) j["secret"] = hit.secret;
        std::cout << j.dump() << '\n';
    }
    std::cout << std::flush;
}

void cmd_extract(const std::string& capture, const std::string& spec_path,
                 const std::string& direction, bool raw, const std::string& out) {
    hyc::DelimiterSpec spec = hyc::DelimiterSpec::parse_file(spec_path);
    hyc::Session session = hyc::read_capture_file(capture);
    hyc::Direction dir = direction == "c2s" ? hyc::Direction::ClientToServer
                                            : hyc::Direction::ServerToClient;
    hyc::Bytes stream = hyc::concat_raw(session, dir);
    if (raw) {
        hyc::Bytes text = hyc::strip_delimiters(stream, spec);
        write_output(out, hyc::to_string(text));
    } else {
        write_output(out, hyc::to_xml(hyc::build_structure(stream, spec)));
    }
}

void cmd_export(const std::string& capture) {
    hyc::Session session = hyc::read_capture_file(capture);
    for (const auto& p : session.packets) std::cout << hyc::packet_ndjson(p) << '\n';
    std::cout << std::flush;
}

void cmd_script_build(const std::string& capture, const std::string& out) {
    hyc::Session session = hyc::read_capture_file(capture);
    hyc::ReplayScript script = hyc::build_script(session);
    write_output(out, script.serialize());
}

void cmd_script_mark(const std::string& script_path, std::size_t step,
                     const std::string& range, const std::string& name) {
    std::size_t colon = range.find(':');
    if (colon == std::string::npos)
        throw CLI::ValidationError("--range", "expected start:end, got '" + range + "'");
    std::size_t start = std::stoull(range.substr(0, colon));
    std::size_t end = std::stoull(range.substr(colon + 1));
    hyc::ReplayScript script = hyc::ReplayScript::parse_file(script_path);
    script = hyc::mark_placeholder(script, step, start, end, name);
    write_output(script_path, script.serialize());
}

void cmd_replay(const std::string& script_path, const std::string& server,
                const std::vector<std::string>& bind_hex,
                const std::vector<std::string>& bind_str,
                const std::string& capture_out) {
    hyc::ReplayScript script = hyc::ReplayScript::parse_file(script_path);
    std::vector<hyc::Substitution> bindings;
    for (const auto& b : bind_hex) bindings.push_back(parse_binding(b, true));
    for (const auto& b : bind_str) bindings.push_back(parse_binding(b, false));

    hyc::ReplayResult result = hyc::run_replay(script, bindings, server);
    if (!capture_out.empty())
        hyc::write_capture_file(capture_out, result.session);

    nlohmann::ordered_json j;
    j["session_id"] = hyc::session_id_hex(result.session.session_id);
    j["steps"] = script.steps.size();
    j["c2s_bytes"] =
        hyc::concat_raw(result.session, hyc::Direction::ClientToServer).size();
    j["s2c_bytes"] =
        hyc::concat_raw(result.session, hyc::Direction::ServerToClient).size();
    j["timed_out_steps"] = result.timed_out_steps;
    std::cout << j.dump() << '\n' << std::flush;
}

void cmd_mock_serve(const std::string& listen, const std::string& dataset_path) {
    hyc::MockDataset dataset = dataset_path.empty()
                                   ? hyc::MockDataset::fixture()
                                   : hyc::MockDataset::parse_file(dataset_path);
    hyc::MockServer server(listen, std::move(dataset));
    std::cerr << "listening " << server.endpoint().str() << '\n' << std::flush;
    wait_for_stop();
    server.stop();
}

void cmd_mock_client(const std::string& server, const std::string& script_path) {
    std::ifstream in(script_path);
    if (!in) throw std::runtime_error("cannot open " + script_path);
    std::vector<std::string> commands;
    for (std::string line; std::getline(in, line);) {
        if (line.empty() || line[0] == '#') continue;
        commands.push_back(line);
    }
    for (const auto& ex : hyc::scripted_client(server, commands)) {
        nlohmann::ordered_json j;
        j["sent_hex"] = hyc::to_hex(ex.sent);
        j["recv_hex"] = hyc::to_hex(ex.received);
        std::cout << j.dump() << '\n';
    }
    std::cout << std::flush;
}

}  // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::signal(SIGPIPE, SIG_IGN);

    CLI::App app{"TCP capture proxy and protocol extraction toolkit"};
    app.require_subcommand(1);

    // proxy
    auto* proxy = app.add_subcommand("proxy", "Relay TCP and capture every byte");
    std::string listen, upstream, capture_dir, sniff_rules;
    bool show_secrets = false;
    proxy->add_option("--listen", listen, "Address to accept clients on")->required();
    proxy->add_option("--upstream", upstream, "Server to relay to")->required();
    proxy->add_option("--capture-dir", capture_dir, "Directory for .hyc files")
        ->required();
    proxy->add_option("--sniff-rules", sniff_rules, "Sniffer rule file");
    proxy->add_flag("--show-secrets", show_secrets, "Print sniffed secrets");
    proxy->callback(
        [&] { cmd_proxy(listen, upstream, capture_dir, sniff_rules, show_secrets); });

    // sniff
    auto* sniff = app.add_subcommand("sniff", "Scan a capture for credentials");
    std::string sniff_capture, sniff_rules_path;
    bool sniff_secrets = false;
    sniff->add_option("--capture", sniff_capture, "HYC1 capture file")->required();
    sniff->add_option("--rules", sniff_rules_path, "Sniffer rule file");
    sniff->add_flag("--show-secrets", sniff_secrets, "Print sniffed secrets");
    sniff->callback(
        [&] { cmd_sniff(sniff_capture, sniff_rules_path, sniff_secrets); });

    // extract
    auto* extract = app.add_subcommand("extract", "Cleanse a capture into XML");
    std::string ex_capture, ex_spec, ex_direction = "s2c", ex_out;
    bool ex_raw = false;
    extract->add_option("--capture", ex_capture, "HYC1 capture file")->required();
    extract->add_option("--spec", ex_spec, "Delimiter rule file")->required();
    extract->add_option("--direction", ex_direction, "Stream to extract")
        ->check(CLI::IsMember({"c2s", "s2c"}));
    extract->add_flag("--raw", ex_raw, "Dump delimiter-stripped bytes, not XML");
    extract->add_option("--out", ex_out, "Output file (default stdout)");
    extract->callback(
        [&] { cmd_extract(ex_capture, ex_spec, ex_direction, ex_raw, ex_out); });

    // export
    auto* exp = app.add_subcommand("export", "Dump a capture as NDJSON packets");
    std::string export_capture;
    exp->add_option("--capture", export_capture, "HYC1 capture file")->required();
    exp->callback([&] { cmd_export(export_capture); });

    // script build | script mark
    auto* script = app.add_subcommand("script", "Replay script operations");
    script->require_subcommand(1);
    auto* build = script->add_subcommand("build", "Derive a script from a capture");
    std::string sb_capture, sb_out;
    build->add_option("--capture", sb_capture, "HYC1 capture file")->required();
    build->add_option("--out", sb_out, "Script file to write")->required();
    build->callback([&] { cmd_script_build(sb_capture, sb_out); });

    auto* mark = script->add_subcommand("mark", "Mark a placeholder in a script");
    std::string sm_script, sm_range, sm_name;
    std::size_t sm_step = 0;
    mark->add_option("--script", sm_script, "Script file (updated in place)")
        ->required();
    mark->add_option("--step", sm_step, "Step index")->required();
    mark->add_option("--range", sm_range, "Byte range start:end")->required();
    mark->add_option("--name", sm_name, "Placeholder name")->required();
    mark->callback([&] { cmd_script_mark(sm_script, sm_step, sm_range, sm_name); });

    // replay
    auto* replay = app.add_subcommand("replay", "Drive a server from a script");
    std::string rp_script, rp_server, rp_capture_out;
    std::vector<std::string> rp_bind, rp_bind_str;
    replay->add_option("--script", rp_script, "Script file")->required();
    replay->add_option("--server", rp_server, "Target host:port")->required();
    replay->add_option("--bind", rp_bind, "Placeholder binding name=hexvalue");
    replay->add_option("--bind-str", rp_bind_str, "Placeholder binding name=string");
    replay->add_option("--capture-out", rp_capture_out, "Persist the replay session");
    replay->callback(
        [&] { cmd_replay(rp_script, rp_server, rp_bind, rp_bind_str, rp_capture_out); });

    // mock-serve
    auto* serve = app.add_subcommand("mock-serve", "Run the deterministic HDP/0 server");
    std::string ms_listen, ms_dataset;
    serve->add_option("--listen", ms_listen, "Address to serve on")->required();
    serve->add_option("--dataset", ms_dataset, "Dataset file (default: fixture)");
    serve->callback([&] { cmd_mock_serve(ms_listen, ms_dataset); });

    // mock-client
    auto* client = app.add_subcommand("mock-client", "Run a command script against a server");
    std::string mc_server, mc_script;
    client->add_option("--server", mc_server, "Target host:port")->required();
    client->add_option("--script", mc_script, "Command lines, one per request")
        ->required();
    client->callback([&] { cmd_mock_client(mc_server, mc_script); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const std::exception& e) {
        std::cerr << "hyc: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
