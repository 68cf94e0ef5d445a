#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clonesim/simulator.hpp"
#include "clonesim/synth.hpp"

namespace clonesim {

inline constexpr const char* kToolVersion = "clonesim 0.1.0";

// Reproducibility record written next to every command's outputs: the full
// parameter snapshot, input content hashes and produced files. Contains no
// wall-clock data, so identical runs write identical manifests.
struct RunManifest {
    std::string command;
    std::string parameters_json;  // canonical (sorted keys)
    std::map<std::string, std::string> input_hashes;
    std::vector<std::string> outputs;

    void add_input(const std::string& path);
    void write(const std::string& out_dir) const;
};

std::string hash_file(const std::string& path);

// Trace ingestion: a contacts CSV supplies node-node events directly; an
// association CSV contributes node-AP events and, when no contacts CSV is
// given, node-node contacts inferred from co-association.
struct DatasetPaths {
    std::optional<std::string> contacts;
    std::optional<std::string> associations;
};

ContactTrace load_dataset(const DatasetPaths& paths, const std::shared_ptr<EntityTable>& table);

struct PipelineOptions {
    DatasetPaths dataset;
    std::string out_dir = ".";
    SimulationConfig sim;
    std::optional<int> fixed_threshold;  // certify/simulate: overrides replay selection
};

std::vector<std::string> run_generate(const SynthConfig& config,
                                      const std::string& config_source_path,
                                      const std::string& out_trace, const std::string& out_dir);
std::vector<std::string> run_stats(const PipelineOptions& opt);
std::vector<std::string> run_communities(const PipelineOptions& opt);
std::vector<std::string> run_certify(const PipelineOptions& opt);
std::vector<std::string> run_simulate_insider(const PipelineOptions& opt);
std::vector<std::string> run_simulate_outsider(const PipelineOptions& opt);
std::vector<std::string> run_simulate_false_positives(const PipelineOptions& opt);
std::vector<std::string> run_report(const std::string& scenarios_csv, const std::string& out_dir);

// Certificates for every node that can be certified from the training
// period; nodes without a certifiable friend set are skipped and listed.
struct CertifiedSet {
    std::vector<CommunityCertificate> certificates;
    std::vector<EntityId> skipped;
};

CertifiedSet certify_all(const Authority& authority, const TraceSplit& split, CandidateKinds kinds,
                         const std::optional<int>& fixed_threshold,
                         const ContactTrace& evaluation);

}  // namespace clonesim
