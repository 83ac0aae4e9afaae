#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "bimind/numerics/autodiff.hpp"
#include "bimind/textprep/document.hpp"

namespace bimind::pipe {

struct Splits {
    std::vector<text::Record> train, val, test;
};

/// Per-class seeded shuffle, then contiguous slicing. The train and val sizes
/// are round(ratio * N), apportioned across classes by largest remainder, so
/// each split stays within one instance per class of the global label mix;
/// test takes the rest. Throws SplitError if any split ends up empty.
Splits split_dataset(const std::vector<text::Record>& records, const std::array<double, 3>& ratios, std::uint64_t seed);

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    /// Global-norm clip applied before the update; 0 disables clipping.
    double clip_norm = 1.0;
};

struct StepReport {
    double grad_norm = 0.0;
    bool clipped = false;
    /// A non-finite gradient was found; nothing was updated.
    bool skipped = false;
};

class Adam {
public:
    Adam(num::ParameterList params, AdamOptions options);

    /// Clips the accumulated gradients, applies one bias-corrected update and
    /// leaves gradients untouched.
    StepReport step();

    std::size_t steps() const noexcept { return t_; }
    const AdamOptions& options() const noexcept { return options_; }
    std::vector<num::Tensor>& first_moments() noexcept { return m_; }
    std::vector<num::Tensor>& second_moments() noexcept { return v_; }
    void set_steps(std::size_t t) noexcept { t_ = t; }

private:
    num::ParameterList params_;
    AdamOptions options_;
    std::vector<num::Tensor> m_, v_;
    std::size_t t_ = 0;
};

double global_grad_norm(const num::ParameterList& params);

} // namespace bimind::pipe
