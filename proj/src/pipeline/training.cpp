#include "bimind/pipeline/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "bimind/errors.hpp"

namespace bimind::pipe {

Splits split_dataset(const std::vector<text::Record>& records, const std::array<double, 3>& ratios, std::uint64_t seed) {
    if (records.empty()) throw SplitError("split: empty dataset");
    double sum = 0.0;
    for (double r : ratios) {
        if (!(r > 0.0)) throw SplitError("split: ratios must be positive");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw SplitError("split: ratios must sum to 1");

    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < records.size(); ++i) by_label[records[i].label].push_back(i);

    std::mt19937_64 rng(seed);
    for (auto& [label, idx] : by_label) std::shuffle(idx.begin(), idx.end(), rng);

    // Largest-remainder apportionment of the global train and val sizes
    // across classes; test takes what is left of each class.
    const auto total = static_cast<double>(records.size());
    std::map<int, std::array<std::size_t, 2>> take;
    std::map<int, std::size_t> left;
    for (const auto& [label, idx] : by_label) left[label] = idx.size();
    for (std::size_t s = 0; s < 2; ++s) {
        const auto target = static_cast<std::size_t>(std::llround(ratios[s] * total));
        std::vector<std::pair<double, int>> remainders;
        std::size_t assigned = 0;
        for (const auto& [label, idx] : by_label) {
            const double quota = ratios[s] * static_cast<double>(idx.size());
            const auto base = std::min(left[label], static_cast<std::size_t>(std::floor(quota)));
            take[label][s] = base;
            assigned += base;
            remainders.emplace_back(quota - std::floor(quota), label);
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t pass = 0; pass < 2 && assigned < target; ++pass) {
            for (const auto& [rem, label] : remainders) {
                if (assigned >= target) break;
                if (pass == 0 && rem == 0.0) continue;
                if (take[label][s] < left[label]) {
                    ++take[label][s];
                    ++assigned;
                }
            }
        }
        for (const auto& [label, idx] : by_label) left[label] -= take[label][s];
    }

    std::vector<std::size_t> train, val, test;
    for (const auto& [label, idx] : by_label) {
        const auto n_train = static_cast<std::ptrdiff_t>(take[label][0]);
        const auto n_val = static_cast<std::ptrdiff_t>(take[label][1]);
        train.insert(train.end(), idx.begin(), idx.begin() + n_train);
        val.insert(val.end(), idx.begin() + n_train, idx.begin() + n_train + n_val);
        test.insert(test.end(), idx.begin() + n_train + n_val, idx.end());
    }
    // Interleave classes again so split order does not group labels.
    auto materialize = [&](std::vector<std::size_t>& ids) {
        std::shuffle(ids.begin(), ids.end(), rng);
        std::vector<text::Record> out;
        out.reserve(ids.size());
        for (auto i : ids) out.push_back(records[i]);
        return out;
    };
    Splits s{materialize(train), materialize(val), materialize(test)};
    if (s.train.empty() || s.val.empty() || s.test.empty()) {
        throw SplitError("split: " + std::to_string(records.size()) + " instances give sizes " +
                         std::to_string(s.train.size()) + "/" + std::to_string(s.val.size()) + "/" +
                         std::to_string(s.test.size()) + "; every split needs at least one");
    }
    return s;
}

double global_grad_norm(const num::ParameterList& params) {
    double ss = 0.0;
    for (const auto* p : params)
        for (double g : p->grad.data()) ss += g * g;
    return std::sqrt(ss);
}

Adam::Adam(num::ParameterList params, AdamOptions options) : params_(std::move(params)), options_(options) {
    if (!(options_.learning_rate >= 0.0)) throw ConfigError("Adam: learning rate must be >= 0");
    if (options_.clip_norm < 0.0) throw ConfigError("Adam: clip norm must be >= 0");
    for (const auto* p : params_) {
        m_.push_back(num::Tensor::zeros_like(p->value));
        v_.push_back(num::Tensor::zeros_like(p->value));
    }
}

StepReport Adam::step() {
    StepReport r;
    r.grad_norm = global_grad_norm(params_);
    if (!std::isfinite(r.grad_norm)) {
        r.skipped = true;
        return r;
    }
    double scale = 1.0;
    if (options_.clip_norm > 0.0 && r.grad_norm > options_.clip_norm) {
        scale = options_.clip_norm / r.grad_norm;
        r.clipped = true;
    }
    ++t_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = *params_[i];
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < p.value.numel(); ++j) {
            const double g = p.grad[j] * scale;
            m[j] = b1 * m[j] + (1.0 - b1) * g;
            v[j] = b2 * v[j] + (1.0 - b2) * g * g;
            p.value[j] -= options_.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + options_.epsilon);
        }
    }
    return r;
}

} // namespace bimind::pipe
