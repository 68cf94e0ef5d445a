#include "clonesim/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

namespace clonesim {

namespace fs = std::filesystem;

std::string hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    char buf[32];
    std::snprintf(buf, sizeof buf, "fnv1a64:%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes)));
    return buf;
}

void RunManifest::add_input(const std::string& path) { input_hashes[path] = hash_file(path); }

void RunManifest::write(const std::string& out_dir) const {
    nlohmann::json j;
    j["tool"] = kToolVersion;
    j["command"] = command;
    j["parameters"] = nlohmann::json::parse(parameters_json);
    nlohmann::json inputs = nlohmann::json::object();
    for (const auto& [path, hash] : input_hashes) inputs[path] = hash;
    j["inputs"] = std::move(inputs);
    // outputs are stored relative to the manifest so identical runs into
    // different directories stay byte-identical
    nlohmann::json outs = nlohmann::json::array();
    for (const std::string& out : outputs) {
        std::error_code ec;
        auto rel = fs::relative(out, out_dir, ec);
        outs.push_back(ec || rel.empty() ? out : rel.string());
    }
    j["outputs"] = std::move(outs);

    const std::string path = (fs::path(out_dir) / "manifest.json").string();
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path);
    os << j.dump(2) << '\n';
    if (!os.flush()) throw IoError("write failed: " + path);
}

ContactTrace load_dataset(const DatasetPaths& paths, const std::shared_ptr<EntityTable>& table) {
    if (!paths.contacts && !paths.associations)
        throw ConfigError("no input: provide a contacts CSV, an associations CSV, or both");

    std::vector<ContactEvent> events;
    if (paths.contacts) {
        auto direct = load_contacts_csv(*paths.contacts, *table);
        events.insert(events.end(), direct.begin(), direct.end());
    }
    if (paths.associations) {
        auto assocs = load_associations_csv(*paths.associations, *table);
        if (!paths.contacts) {
            auto inferred = infer_contacts(assocs);
            events.insert(events.end(), inferred.begin(), inferred.end());
        }
        auto ap_events = associations_as_contacts(assocs);
        events.insert(events.end(), ap_events.begin(), ap_events.end());
    }
    return ContactTrace::from_events(std::move(events), table);
}

namespace {

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

std::string join(const std::string& dir, const std::string& file) {
    return (fs::path(dir) / file).string();
}

nlohmann::json dataset_params(const PipelineOptions& opt) {
    nlohmann::json j;
    if (opt.dataset.contacts) j["trace"] = *opt.dataset.contacts;
    if (opt.dataset.associations) j["ap_associations"] = *opt.dataset.associations;
    j["split_fraction"] = opt.sim.split_fraction;
    j["kclique_k"] = opt.sim.kclique_k;
    j["min_days"] = opt.sim.min_days;
    j["candidate_kinds"] = to_string(opt.sim.candidate_kinds);
    j["seed"] = opt.sim.seed;
    j["attack_samples_per_target"] = opt.sim.attack_sampling.samples_per_target;
    j["attack_every_day"] =
        opt.sim.attack_sampling.policy == AttackSampling::Policy::EveryDayStart;
    if (opt.fixed_threshold) j["fixed_threshold"] = *opt.fixed_threshold;
    return j;
}

RunManifest start_manifest(const char* command, const PipelineOptions& opt) {
    RunManifest manifest;
    manifest.command = command;
    manifest.parameters_json = dataset_params(opt).dump();
    if (opt.dataset.contacts) manifest.add_input(*opt.dataset.contacts);
    if (opt.dataset.associations) manifest.add_input(*opt.dataset.associations);
    return manifest;
}

}  // namespace

CertifiedSet certify_all(const Authority& authority, const TraceSplit& split, CandidateKinds kinds,
                         const std::optional<int>& fixed_threshold,
                         const ContactTrace& evaluation) {
    CertifiedSet out;
    NodeEventIndex training_index(split.training);
    NodeEventIndex eval_index(evaluation);
    for (EntityId node : split.training.entities()) {
        if (node.kind != EntityKind::MobileNode) continue;
        ThresholdPolicy policy;
        if (fixed_threshold) {
            policy = FixedThreshold{*fixed_threshold};
        } else {
            policy = ReplayThreshold{&evaluation, &eval_index.events_of(node)};
        }
        try {
            out.certificates.push_back(issue_certificate(authority, node, split.training, kinds,
                                                         policy, &training_index.events_of(node)));
        } catch (const EmptyFriendSet&) {
            out.skipped.push_back(node);
        } catch (const ConfigError&) {
            // fixed threshold larger than this node's friend set
            out.skipped.push_back(node);
        }
    }
    return out;
}

std::vector<std::string> run_generate(const SynthConfig& config,
                                      const std::string& config_source_path,
                                      const std::string& out_trace, const std::string& out_dir) {
    ensure_dir(out_dir);
    ContactTrace trace = generate(config);
    save_contacts_csv(out_trace, trace);

    RunManifest manifest;
    manifest.command = "generate";
    nlohmann::json params = nlohmann::json::parse(synth_config_to_json(config));
    params["out_trace"] = out_trace;
    manifest.parameters_json = params.dump();
    if (!config_source_path.empty()) manifest.add_input(config_source_path);
    manifest.outputs = {out_trace};
    manifest.write(out_dir);
    return {out_trace, join(out_dir, "manifest.json")};
}

std::vector<std::string> run_stats(const PipelineOptions& opt) {
    ensure_dir(opt.out_dir);
    auto table = std::make_shared<EntityTable>();
    ContactTrace trace = load_dataset(opt.dataset, table);
    TraceStats stats = trace_stats(trace, opt.sim.split_fraction);

    const std::string path = join(opt.out_dir, "trace_stats.csv");
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path);
    write_stats_csv(os, stats);
    if (!os.flush()) throw IoError("write failed: " + path);

    RunManifest manifest = start_manifest("stats", opt);
    manifest.outputs = {path};
    manifest.write(opt.out_dir);
    return {path, join(opt.out_dir, "manifest.json")};
}

namespace {

TraceSplit split_dataset(const PipelineOptions& opt, const std::shared_ptr<EntityTable>& table,
                         ContactTrace& trace) {
    trace = load_dataset(opt.dataset, table);
    return split(trace, opt.sim.split_fraction);
}

}  // namespace

std::vector<std::string> run_communities(const PipelineOptions& opt) {
    ensure_dir(opt.out_dir);
    auto table_ptr = std::make_shared<EntityTable>();
    EntityTable& table = *table_ptr;
    ContactTrace trace;
    TraceSplit s = split_dataset(opt, table_ptr, trace);
    SocialGraph graph = build_social_graph(s.training, opt.sim.min_days);
    auto communities = k_clique_communities(graph, opt.sim.kclique_k);

    const std::string commpath = join(opt.out_dir, "communities.csv");
    {
        std::ofstream os(commpath);
        if (!os) throw IoError("cannot write " + commpath);
        os << "community_id,member_id\n";
        for (std::size_t ci = 0; ci < communities.size(); ++ci)
            for (EntityId m : communities[ci].members) os << ci << ',' << table.name(m) << '\n';
        if (!os.flush()) throw IoError("write failed: " + commpath);
    }
    const std::string edgepath = join(opt.out_dir, "social_graph_edges.csv");
    {
        std::ofstream os(edgepath);
        if (!os) throw IoError("cannot write " + edgepath);
        os << "a,b,meeting_days\n";
        for (const auto& [pair, w] : graph.weights())
            os << table.name(table.id_at(pair.first)) << ',' << table.name(table.id_at(pair.second))
               << ',' << w << '\n';
        if (!os.flush()) throw IoError("write failed: " + edgepath);
    }

    RunManifest manifest = start_manifest("communities", opt);
    manifest.outputs = {commpath, edgepath};
    manifest.write(opt.out_dir);
    return {commpath, edgepath, join(opt.out_dir, "manifest.json")};
}

std::vector<std::string> run_certify(const PipelineOptions& opt) {
    ensure_dir(opt.out_dir);
    auto table_ptr = std::make_shared<EntityTable>();
    EntityTable& table = *table_ptr;
    ContactTrace trace;
    TraceSplit s = split_dataset(opt, table_ptr, trace);
    WorldKeys world = make_world_keys(table, opt.sim.seed);
    Authority authority = world.make_authority();
    CertifiedSet set =
        certify_all(authority, s, opt.sim.candidate_kinds, opt.fixed_threshold, s.evaluation);

    const std::string certpath = join(opt.out_dir, "certificates.json");
    {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& cert : set.certificates)
            arr.push_back(nlohmann::json::parse(certificate_to_json(cert, table)));
        nlohmann::json j;
        j["certificates"] = std::move(arr);
        nlohmann::json skipped = nlohmann::json::array();
        for (EntityId id : set.skipped) skipped.push_back(table.name(id));
        j["skipped"] = std::move(skipped);
        std::ofstream os(certpath);
        if (!os) throw IoError("cannot write " + certpath);
        os << j.dump(2) << '\n';
        if (!os.flush()) throw IoError("write failed: " + certpath);
    }

    const std::string sizepath = join(opt.out_dir, "friend_set_sizes.csv");
    {
        std::ofstream os(sizepath);
        if (!os) throw IoError("cannot write " + sizepath);
        os << "node,friend_set_size\n";
        for (const auto& cert : set.certificates)
            os << table.name(cert.owner) << ',' << cert.friends.size() << '\n';
        if (!os.flush()) throw IoError("write failed: " + sizepath);
    }
    const std::string kpath = join(opt.out_dir, "threshold_values.csv");
    {
        std::ofstream os(kpath);
        if (!os) throw IoError("cannot write " + kpath);
        os << "node,threshold\n";
        for (const auto& cert : set.certificates)
            os << table.name(cert.owner) << ',' << cert.threshold << '\n';
        if (!os.flush()) throw IoError("write failed: " + kpath);
    }

    RunManifest manifest = start_manifest("certify", opt);
    manifest.outputs = {certpath, sizepath, kpath};
    manifest.write(opt.out_dir);
    return {certpath, sizepath, kpath, join(opt.out_dir, "manifest.json")};
}

std::vector<std::string> run_simulate_insider(const PipelineOptions& opt) {
    ensure_dir(opt.out_dir);
    auto table_ptr = std::make_shared<EntityTable>();
    EntityTable& table = *table_ptr;
    ContactTrace trace;
    TraceSplit s = split_dataset(opt, table_ptr, trace);
    SocialGraph graph = build_social_graph(s.training, opt.sim.min_days);
    auto communities = k_clique_communities(graph, opt.sim.kclique_k);
    auto reports = run_insider_experiment(s, communities, opt.sim, table);

    const std::string scen = join(opt.out_dir, "insider_scenarios.csv");
    write_scenarios_csv(scen, reports, table);
    auto averages = per_victim_averages(reports);
    const std::string pernode = join(opt.out_dir, "insider_per_node.csv");
    write_node_averages_csv(pernode, averages, table);

    std::vector<double> avg_values;
    std::size_t never = 0;
    for (const NodeAverage& a : averages) {
        if (a.scenarios == a.unresolved)
            ++never;
        else
            avg_values.push_back(a.average_days);
    }
    const std::string ccdf = join(opt.out_dir, "insider_detection_ccdf.csv");
    write_ccdf_csv(ccdf, avg_values, never);

    RunManifest manifest = start_manifest("simulate-insider", opt);
    manifest.outputs = {scen, pernode, ccdf};
    manifest.write(opt.out_dir);
    return {scen, pernode, ccdf, join(opt.out_dir, "manifest.json")};
}

std::vector<std::string> run_simulate_outsider(const PipelineOptions& opt) {
    ensure_dir(opt.out_dir);
    auto table_ptr = std::make_shared<EntityTable>();
    EntityTable& table = *table_ptr;
    ContactTrace trace;
    TraceSplit s = split_dataset(opt, table_ptr, trace);
    WorldKeys world = make_world_keys(table, opt.sim.seed);
    Authority authority = world.make_authority();
    CertifiedSet set =
        certify_all(authority, s, opt.sim.candidate_kinds, opt.fixed_threshold, s.evaluation);
    auto reports = run_outsider_experiment(s, set.certificates, opt.sim);

    const std::string scen = join(opt.out_dir, "outsider_scenarios.csv");
    write_scenarios_csv(scen, reports, table);
    auto averages = per_victim_averages(reports);
    const std::string pernode = join(opt.out_dir, "outsider_per_node.csv");
    write_node_averages_csv(pernode, averages, table);
    std::vector<double> values;
    for (const NodeAverage& a : averages) values.push_back(a.average_days);
    const std::string ccdf = join(opt.out_dir, "outsider_duration_ccdf.csv");
    write_ccdf_csv(ccdf, values);

    RunManifest manifest = start_manifest("simulate-outsider", opt);
    manifest.outputs = {scen, pernode, ccdf};
    manifest.write(opt.out_dir);
    return {scen, pernode, ccdf, join(opt.out_dir, "manifest.json")};
}

std::vector<std::string> run_simulate_false_positives(const PipelineOptions& opt) {
    ensure_dir(opt.out_dir);
    auto table_ptr = std::make_shared<EntityTable>();
    EntityTable& table = *table_ptr;
    ContactTrace trace;
    TraceSplit s = split_dataset(opt, table_ptr, trace);
    WorldKeys world = make_world_keys(table, opt.sim.seed);
    Authority authority = world.make_authority();
    // The lower bound the construction admits: a single fresh update keeps
    // the node authenticated.
    std::optional<int> threshold = opt.fixed_threshold ? opt.fixed_threshold : std::optional<int>(1);
    CertifiedSet set = certify_all(authority, s, opt.sim.candidate_kinds, threshold, s.evaluation);
    auto reports = run_false_positive_experiment(s, set.certificates);

    const std::string path = join(opt.out_dir, "false_positives.csv");
    write_false_positives_csv(path, reports, table);

    RunManifest manifest = start_manifest("simulate-false-positives", opt);
    manifest.outputs = {path};
    manifest.write(opt.out_dir);
    return {path, join(opt.out_dir, "manifest.json")};
}

std::vector<std::string> run_report(const std::string& scenarios_csv, const std::string& out_dir) {
    ensure_dir(out_dir);

    std::ifstream in(scenarios_csv);
    if (!in) throw IoError("cannot open " + scenarios_csv);
    std::string line;
    std::size_t lineno = 0;
    struct Row {
        std::string victim;
        bool resolved = false;
        double latency_days = 0.0;
    };
    std::vector<Row> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (lineno == 1 && line.rfind("victim,", 0) == 0) continue;
        std::stringstream ss(line);
        std::string victim, donor, kind, t0, outcome, latency;
        if (!std::getline(ss, victim, ',') || !std::getline(ss, donor, ',') ||
            !std::getline(ss, kind, ',') || !std::getline(ss, t0, ','))
            throw ParseError(scenarios_csv, lineno, "expected 6 fields");
        if (!std::getline(ss, outcome, ',')) throw ParseError(scenarios_csv, lineno, "expected 6 fields");
        std::getline(ss, latency, ',');
        Row row;
        row.victim = victim;
        row.resolved = outcome != "not-detected";
        if (row.resolved) {
            try {
                row.latency_days = std::stod(latency);
            } catch (const std::exception&) {
                throw ParseError(scenarios_csv, lineno, "bad latency '" + latency + "'");
            }
        }
        rows.push_back(std::move(row));
    }

    std::map<std::string, std::pair<double, std::size_t>> sums;  // victim -> (sum, resolved)
    std::map<std::string, std::size_t> unresolved;
    for (const Row& r : rows) {
        if (r.resolved) {
            auto& agg = sums[r.victim];
            agg.first += r.latency_days;
            ++agg.second;
        } else {
            ++unresolved[r.victim];
            sums.try_emplace(r.victim, 0.0, 0);
        }
    }

    const std::string pernode = (fs::path(out_dir) / "per_node.csv").string();
    std::vector<double> values;
    std::size_t never = 0;
    {
        std::ofstream os(pernode);
        if (!os) throw IoError("cannot write " + pernode);
        os << "node,average_days,scenarios,unresolved\n";
        for (const auto& [victim, agg] : sums) {
            const std::size_t miss = unresolved.count(victim) ? unresolved[victim] : 0;
            os << victim << ',';
            if (agg.second > 0) {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.6f", agg.first / static_cast<double>(agg.second));
                os << buf;
                values.push_back(agg.first / static_cast<double>(agg.second));
            } else {
                ++never;
            }
            os << ',' << (agg.second + miss) << ',' << miss << '\n';
        }
        if (!os.flush()) throw IoError("write failed: " + pernode);
    }
    const std::string ccdf = (fs::path(out_dir) / "ccdf.csv").string();
    write_ccdf_csv(ccdf, values, never);

    RunManifest manifest;
    manifest.command = "report";
    nlohmann::json params;
    params["scenarios"] = scenarios_csv;
    manifest.parameters_json = params.dump();
    manifest.add_input(scenarios_csv);
    manifest.outputs = {pernode, ccdf};
    manifest.write(out_dir);
    return {pernode, ccdf, (fs::path(out_dir) / "manifest.json").string()};
}

}  // namespace clonesim
