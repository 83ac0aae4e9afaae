#pragma once

#include <array>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bimind/diagnostics/report.hpp"
#include "bimind/memory/memory_bank.hpp"
#include "bimind/model/dual_model.hpp"
#include "bimind/pipeline/config.hpp"
#include "bimind/pipeline/training.hpp"

namespace bimind::pipe {

/// A document with everything the model consumes.
struct Instance {
    text::TokenizedDoc doc;
    num::Tensor content;
    num::Tensor m_bar;
    mem::Neighbors neighbors;
    bool knowledge_absent = false;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_f1 = 0.0;
    double val_accuracy = 0.0;
    double val_sym_kl = 0.0;
    std::size_t skipped_steps = 0;
    bool improved = false;
};

struct TrainSummary {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val_f1 = 0.0;
    bool early_stopped = false;
    bool diverged = false;
    std::string divergence_reason;
};

struct Evaluation {
    std::vector<diag::TraceRecord> traces;
    std::vector<diag::VoxRecord> vox;
    diag::RoutingReport report;
};

/// Owns one run: configuration, the train-split vocabulary, class weights and
/// memory bank, the model and its optimizer state.
class Session {
public:
    /// Splits `dataset`, then builds vocabulary, class weights and the memory
    /// bank from the train split only and initializes the model.
    static Session create(const RunConfig& config, const std::vector<text::Record>& dataset);

    /// Reads a checkpoint and the memory file next to it (`<path>.mem`).
    static Session load(const std::string& path);
    /// Writes the checkpoint to `path` and the memory bank to `<path>.mem`.
    void save(const std::string& path) const;

    /// Runs until early stopping or max_epochs and leaves the best-validation
    /// parameters in place. Needs the split records, so only sessions from
    /// `create` can train.
    TrainSummary train(std::ostream* log = nullptr);

    /// Dropout off; retrieval without self-exclusion.
    Evaluation evaluate(const std::vector<text::Record>& records, const diag::RoutingThresholds& thresholds = {});

    /// Per-head attention entropy and POS mass averaged over `records`; when
    /// `alpha_out` is set, every attention matrix is written to it as JSON lines.
    std::vector<aga::HeadDiagnostics> diagnose_attention(const std::vector<text::Record>& records,
                                                         std::ostream* alpha_out = nullptr);

    Instance featurize(const text::Record& record, bool exclude_self) const;

    /// Records of `data` whose ids belong to the named split ("train", "val",
    /// "test") in stored order, or all of `data` for "all".
    std::vector<text::Record> select(const std::vector<text::Record>& data, const std::string& split) const;

    const RunConfig& config() const noexcept { return config_; }
    const text::Vocabulary& vocabulary() const noexcept { return vocab_; }
    const std::array<double, model::kClasses>& class_weights() const noexcept { return weights_; }
    const mem::MemoryBank& bank() const noexcept { return bank_; }
    model::BimindModel& model() noexcept { return *model_; }
    const std::vector<std::string>& split_ids(const std::string& split) const;
    const Splits& split_records() const noexcept { return splits_; }
    std::size_t epoch() const noexcept { return epoch_; }
    double best_val_f1() const noexcept { return best_val_f1_; }

private:
    Session() = default;
    diag::TraceRecord trace_of(const text::Record& record, const Instance& inst, num::Tape& tape);
    void init_model();

    RunConfig config_;
    text::Vocabulary vocab_;
    std::array<double, model::kClasses> weights_{1.0, 1.0};
    std::unique_ptr<mem::HashingProvider> provider_;
    mem::MemoryBank bank_;
    std::unique_ptr<model::BimindModel> model_;
    std::unique_ptr<Adam> adam_;
    Splits splits_;
    std::vector<std::string> train_ids_, val_ids_, test_ids_;
    std::mt19937_64 rng_;
    std::size_t epoch_ = 0;
    double best_val_f1_ = -1.0;
    double best_val_loss_ = std::numeric_limits<double>::infinity();
};

nlohmann::json to_json(const TrainSummary& s);

} // namespace bimind::pipe
