#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "clonesim/pipeline.hpp"

namespace {

// Exit codes: 0 success, 2 usage, 3 bad input or config, 4 runtime failure.
constexpr int kExitUsage = 2;
constexpr int kExitInput = 3;
constexpr int kExitRuntime = 4;

struct CommonArgs {
    std::string trace;
    std::string associations;
    std::string out_dir = "out";
    double split_fraction = 0.25;
    int kclique_k = 3;
    int min_days = 3;
    std::string candidate_kinds = "node";
    std::uint64_t seed = 1;
    int attack_samples = 1;
    bool attack_every_day = false;
    int fixed_threshold = 0;
    int threads = 0;
};

void add_dataset_flags(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--trace", args.trace, "contacts CSV (a,b,start,end), plain or .gz");
    cmd->add_option("--ap-associations", args.associations,
                    "access-point association CSV (node,ap,start,end)");
    cmd->add_option("--out-dir", args.out_dir, "output directory")->capture_default_str();
    cmd->add_option("--split-fraction", args.split_fraction,
                    "training fraction of the trace span")
        ->capture_default_str();
    cmd->add_option("--seed", args.seed, "deterministic run seed")->capture_default_str();
}

void add_model_flags(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--kclique-k", args.kclique_k, "clique size for community percolation")
        ->capture_default_str();
    cmd->add_option("--min-days", args.min_days,
                    "distinct meeting days required for a social edge")
        ->capture_default_str();
}

void add_cert_flags(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--candidate-kinds", args.candidate_kinds,
                    "certificate friend candidates: node|ap|both")
        ->capture_default_str();
    cmd->add_option("--fixed-threshold", args.fixed_threshold,
                    "fix the validity threshold instead of selecting it by replay");
}

clonesim::PipelineOptions to_options(const CommonArgs& args) {
    clonesim::PipelineOptions opt;
    if (!args.trace.empty()) opt.dataset.contacts = args.trace;
    if (!args.associations.empty()) opt.dataset.associations = args.associations;
    opt.out_dir = args.out_dir;
    opt.sim.split_fraction = args.split_fraction;
    opt.sim.kclique_k = args.kclique_k;
    opt.sim.min_days = args.min_days;
    opt.sim.seed = args.seed;
    opt.sim.threads = args.threads;
    opt.sim.attack_sampling.samples_per_target = args.attack_samples;
    opt.sim.attack_sampling.policy = args.attack_every_day
                                         ? clonesim::AttackSampling::Policy::EveryDayStart
                                         : clonesim::AttackSampling::Policy::SampledDayStarts;
    auto kinds = clonesim::candidate_kinds_from_string(args.candidate_kinds);
    if (!kinds) throw clonesim::ConfigError("bad --candidate-kinds (use node|ap|both)");
    opt.sim.candidate_kinds = *kinds;
    if (args.fixed_threshold > 0) opt.fixed_threshold = args.fixed_threshold;
    return opt;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"trace-driven clone-attack detection simulator"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string gen_config;
    std::string gen_out = "trace.csv";
    std::string report_scenarios;
    std::uint64_t gen_seed = 0;
    bool gen_seed_set = false;

    auto* generate = app.add_subcommand("generate", "write a synthetic contact trace");
    generate->add_option("--config", gen_config, "generator config (JSON)")->required();
    generate->add_option("--out", gen_out, "output trace CSV")->capture_default_str();
    generate->add_option("--out-dir", args.out_dir, "manifest directory")->capture_default_str();
    generate->add_option("--seed", gen_seed, "override the config seed")
        ->each([&](const std::string&) { gen_seed_set = true; });

    auto* stats = app.add_subcommand("stats", "trace statistics");
    add_dataset_flags(stats, args);

    auto* communities = app.add_subcommand("communities", "training-period social communities");
    add_dataset_flags(communities, args);
    add_model_flags(communities, args);

    auto* certify = app.add_subcommand("certify", "build community certificates");
    add_dataset_flags(certify, args);
    add_cert_flags(certify, args);

    auto* simulate = app.add_subcommand("simulate", "replay attacks against the evaluation trace");
    std::string mode;
    simulate->add_option("mode", mode, "insider | outsider | false-positives")->required();
    add_dataset_flags(simulate, args);
    add_model_flags(simulate, args);
    add_cert_flags(simulate, args);
    simulate->add_option("--attack-samples", args.attack_samples,
                         "attack instants sampled per target")
        ->capture_default_str();
    simulate->add_flag("--attack-every-day", args.attack_every_day,
                       "attack at the start of every evaluation day");
    simulate->add_option("--threads", args.threads, "worker threads (0 = auto)")
        ->capture_default_str();

    auto* report = app.add_subcommand("report", "recompute aggregates from a scenarios CSV");
    report->add_option("--scenarios", report_scenarios, "scenarios CSV from a simulate run")
        ->required();
    report->add_option("--out-dir", args.out_dir, "output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        std::vector<std::string> outputs;
        if (generate->parsed()) {
            clonesim::SynthConfig config = clonesim::load_synth_config(gen_config);
            if (gen_seed_set) config.seed = gen_seed;
            outputs = clonesim::run_generate(config, gen_config, gen_out, args.out_dir);
        } else if (stats->parsed()) {
            outputs = clonesim::run_stats(to_options(args));
            std::ifstream in(outputs.front());
            std::cout << in.rdbuf();
        } else if (communities->parsed()) {
            outputs = clonesim::run_communities(to_options(args));
        } else if (certify->parsed()) {
            outputs = clonesim::run_certify(to_options(args));
        } else if (simulate->parsed()) {
            auto opt = to_options(args);
            if (mode == "insider") {
                outputs = clonesim::run_simulate_insider(opt);
            } else if (mode == "outsider") {
                outputs = clonesim::run_simulate_outsider(opt);
            } else if (mode == "false-positives") {
                outputs = clonesim::run_simulate_false_positives(opt);
            } else {
                std::cerr << "unknown simulate mode '" << mode
                          << "' (use insider|outsider|false-positives)\n";
                return kExitUsage;
            }
        } else if (report->parsed()) {
            outputs = clonesim::run_report(report_scenarios, args.out_dir);
        }
        for (const std::string& path : outputs) std::cout << "wrote " << path << '\n';
        return 0;
    } catch (const clonesim::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const clonesim::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const clonesim::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}
