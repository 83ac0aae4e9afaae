#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>

#include "bimind/model/dual_model.hpp"

namespace bimind::pipe {

/// Everything a run needs. Parsed from a flat `key = value` file where `#`
/// starts a comment; unknown keys are errors.
struct RunConfig {
    model::ModelConfig model;
    std::size_t l_max = 256;
    std::size_t min_frequency = 2;
    double learning_rate = 1e-5;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 50;
    std::size_t patience = 3;
    double grad_clip_norm = 1.0;
    std::array<double, 3> split{0.8, 0.1, 0.1};
    std::uint64_t seed = 0;
    /// Seed of the hashing memory encoder; independent of the training seed
    /// so seed sweeps share one embedding space.
    std::uint64_t memory_seed = 0;

    RunConfig();
    void validate() const;
    /// Sets one key; throws ConfigError for unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    /// Canonical `key = value` listing of every key.
    std::string to_text() const;
    /// 16 hex digits identifying `to_text()`.
    std::string fingerprint() const;
};

RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::string& path);

/// Component switches used by the ablation harness.
struct Ablation {
    bool no_aga = false;
    bool no_retrieval = false;
    bool no_gate = false;
    bool no_agreement_head = false;
    bool no_kl = false;
};

void apply_ablation(RunConfig& config, const Ablation& ablation);

} // namespace bimind::pipe
