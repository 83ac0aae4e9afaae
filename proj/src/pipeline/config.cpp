#include "bimind/pipeline/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bimind/errors.hpp"

namespace bimind::pipe {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size() || !std::isfinite(d)) throw ConfigError("");
        return d;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

RunConfig::RunConfig() {
    model.encoder.vocab_size = 2;
}

void RunConfig::validate() const {
    model.validate();
    if (l_max == 0) throw ConfigError("l_max must be positive");
    if (min_frequency == 0) throw ConfigError("min_frequency must be at least 1");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
    if (patience == 0) throw ConfigError("patience must be positive");
    if (!(grad_clip_norm > 0.0)) throw ConfigError("grad_clip_norm must be positive");
    double sum = 0.0;
    for (double r : split) {
        if (!(r > 0.0)) throw ConfigError("split ratios must be positive");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1, got " + num(sum));
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto& enc = model.encoder;
    if (key == "fusion_mode") model.fusion = model::parse_fusion_mode(value);
    else if (key == "lambda_agree") model.lambda_agree = to_double(key, value);
    else if (key == "d") enc.d = to_size(key, value);
    else if (key == "d_c") model.d_c = to_size(key, value);
    else if (key == "d_s") model.d_s = to_size(key, value);
    else if (key == "layers") enc.layers = to_size(key, value);
    else if (key == "heads") enc.heads = to_size(key, value);
    else if (key == "k_neighbors") model.k_neighbors = to_size(key, value);
    else if (key == "dropout") model.dropout = to_double(key, value);
    else if (key == "l_max") l_max = to_size(key, value);
    else if (key == "seed") seed = to_u64(key, value);
    else if (key == "memory_seed") memory_seed = to_u64(key, value);
    else if (key == "learning_rate") learning_rate = to_double(key, value);
    else if (key == "batch_size") batch_size = to_size(key, value);
    else if (key == "max_epochs") max_epochs = to_size(key, value);
    else if (key == "patience") patience = to_size(key, value);
    else if (key == "grad_clip_norm") grad_clip_norm = to_double(key, value);
    else if (key == "train_ratio") split[0] = to_double(key, value);
    else if (key == "val_ratio") split[1] = to_double(key, value);
    else if (key == "test_ratio") split[2] = to_double(key, value);
    else if (key == "min_frequency") min_frequency = to_size(key, value);
    else if (key == "agreement_hidden") model.agreement_hidden = to_size(key, value);
    else if (key == "ff_multiplier") enc.ff_multiplier = to_size(key, value);
    else if (key == "offset_hidden") enc.offset_hidden = to_size(key, value);
    else if (key == "use_aga") enc.use_aga = to_bool(key, value);
    else if (key == "use_retrieval") model.use_retrieval = to_bool(key, value);
    else if (key == "positional_encoding") enc.positional_encoding = to_bool(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
}

std::string RunConfig::to_text() const {
    const auto& enc = model.encoder;
    std::ostringstream o;
    o << "fusion_mode = " << model::fusion_mode_name(model.fusion) << '\n'
      << "lambda_agree = " << num(model.lambda_agree) << '\n'
      << "d = " << enc.d << '\n'
      << "d_c = " << model.d_c << '\n'
      << "d_s = " << model.d_s << '\n'
      << "layers = " << enc.layers << '\n'
      << "heads = " << enc.heads << '\n'
      << "k_neighbors = " << model.k_neighbors << '\n'
      << "dropout = " << num(model.dropout) << '\n'
      << "l_max = " << l_max << '\n'
      << "seed = " << seed << '\n'
      << "memory_seed = " << memory_seed << '\n'
      << "learning_rate = " << num(learning_rate) << '\n'
      << "batch_size = " << batch_size << '\n'
      << "max_epochs = " << max_epochs << '\n'
      << "patience = " << patience << '\n'
      << "grad_clip_norm = " << num(grad_clip_norm) << '\n'
      << "train_ratio = " << num(split[0]) << '\n'
      << "val_ratio = " << num(split[1]) << '\n'
      << "test_ratio = " << num(split[2]) << '\n'
      << "min_frequency = " << min_frequency << '\n'
      << "agreement_hidden = " << model.agreement_hidden << '\n'
      << "ff_multiplier = " << enc.ff_multiplier << '\n'
      << "offset_hidden = " << enc.offset_hidden << '\n'
      << "use_aga = " << (enc.use_aga ? "true" : "false") << '\n'
      << "use_retrieval = " << (model.use_retrieval ? "true" : "false") << '\n'
      << "positional_encoding = " << (enc.positional_encoding ? "true" : "false") << '\n';
    return o.str();
}

std::string RunConfig::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : to_text()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunConfig parse_config(std::istream& in) {
    RunConfig c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        try {
            c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config(in);
}

void apply_ablation(RunConfig& config, const Ablation& a) {
    if (a.no_aga) config.model.encoder.use_aga = false;
    if (a.no_retrieval) config.model.use_retrieval = false;
    if (a.no_gate) config.model.fusion = model::FusionMode::Average;
    if (a.no_agreement_head && config.model.fusion == model::FusionMode::AgreementHead) {
        config.model.fusion = model::FusionMode::EntropyGate;
    }
    if (a.no_kl) config.model.lambda_agree = 0.0;
}

} // namespace bimind::pipe
