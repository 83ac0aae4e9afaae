#include "bimind/pipeline/session.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "bimind/errors.hpp"

namespace bimind::pipe {

using nlohmann::json;
using num::Tensor;

namespace {

constexpr int kCheckpointVersion = 1;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t x = seed ^ (stream * 0x9e3779b97f4a7c15ULL);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::vector<std::string> ids_of(const std::vector<text::Record>& r) {
    std::vector<std::string> out;
    out.reserve(r.size());
    for (const auto& x : r) out.push_back(x.id);
    return out;
}

diag::Logits logits_of(const Tensor& t) { return {t[0], t[1]}; }

json tensor_json(const Tensor& t) { return {{"shape", t.shape()}, {"data", t.values()}}; }

Tensor tensor_from_json(const json& j) {
    return Tensor(j.at("shape").get<num::Shape>(), j.at("data").get<std::vector<double>>());
}

std::string memory_path(const std::string& checkpoint) { return checkpoint + ".mem"; }

} // namespace

void Session::init_model() {
    std::mt19937_64 init_rng(derive_seed(config_.seed, 1));
    model_ = std::make_unique<model::BimindModel>(config_.model, init_rng);
    AdamOptions opts;
    opts.learning_rate = config_.learning_rate;
    opts.clip_norm = config_.grad_clip_norm;
    adam_ = std::make_unique<Adam>(model_->parameters(), opts);
}

Session Session::create(const RunConfig& config, const std::vector<text::Record>& dataset) {
    config.validate();
    Session s;
    s.config_ = config;
    s.splits_ = split_dataset(dataset, config.split, derive_seed(config.seed, 0));
    s.train_ids_ = ids_of(s.splits_.train);
    s.val_ids_ = ids_of(s.splits_.val);
    s.test_ids_ = ids_of(s.splits_.test);

    std::vector<std::vector<std::string>> tokens;
    std::vector<int> labels;
    for (const auto& r : s.splits_.train) {
        tokens.push_back(text::tokenize(r.text).items);
        labels.push_back(r.label);
    }
    s.vocab_ = text::Vocabulary::build(tokens, config.min_frequency);
    s.weights_ = model::class_weights(labels);
    s.provider_ = std::make_unique<mem::HashingProvider>(config.model.d_s, config.memory_seed);
    s.bank_ = mem::MemoryBank::build(s.splits_.train, *s.provider_);
    s.config_.model.encoder.vocab_size = s.vocab_.size();
    s.init_model();
    s.rng_.seed(derive_seed(config.seed, 2));
    return s;
}

const std::vector<std::string>& Session::split_ids(const std::string& split) const {
    if (split == "train") return train_ids_;
    if (split == "val") return val_ids_;
    if (split == "test") return test_ids_;
    throw ConfigError("unknown split '" + split + "' (expected train, val, test or all)");
}

std::vector<text::Record> Session::select(const std::vector<text::Record>& data, const std::string& split) const {
    if (split == "all") return data;
    const auto& ids = split_ids(split);
    std::unordered_map<std::string, const text::Record*> by_id;
    for (const auto& r : data) by_id.emplace(r.id, &r);
    std::vector<text::Record> out;
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw DatasetError("dataset has no record with " + split + " id '" + id + "'");
        out.push_back(*it->second);
    }
    return out;
}

Instance Session::featurize(const text::Record& record, bool exclude_self) const {
    Instance inst;
    inst.doc = text::make_doc(record, vocab_, config_.l_max);
    const std::size_t dc = config_.model.d_c, ds = config_.model.d_s;
    auto feats = text::content_features(record.text, &vocab_, config_.l_max);
    inst.content = Tensor({1, std::max<std::size_t>(dc, 1)});
    for (std::size_t i = 0; i < dc; ++i) inst.content[i] = feats[i];
    inst.m_bar = Tensor({1, ds});
    if (!config_.model.use_retrieval) {
        inst.knowledge_absent = true;
        return inst;
    }
    auto q = provider_->embed(record.text);
    std::optional<std::string_view> ex;
    if (exclude_self) ex = record.id;
    inst.neighbors = mem::topk(q.values, bank_, config_.model.k_neighbors, ex);
    auto agg = mem::aggregate(bank_, inst.neighbors.indices, ds);
    inst.knowledge_absent = agg.knowledge_absent;
    for (std::size_t c = 0; c < ds; ++c) inst.m_bar[c] = agg.mean[c];
    return inst;
}

diag::TraceRecord Session::trace_of(const text::Record& record, const Instance& inst, num::Tape& tape) {
    auto f = model_->forward(tape, inst.doc, inst.content, inst.m_bar);
    diag::TraceRecord t;
    t.id = record.id;
    t.y = record.label;
    t.z0 = logits_of(f.z0.value());
    t.ze = logits_of(f.ze.value());
    t.zf = logits_of(f.zf.value());
    t.p0 = logits_of(f.p0.value());
    t.pe = logits_of(f.pe.value());
    t.pf = logits_of(f.pf.value());
    t.h0 = f.h0.item();
    t.he = f.he.item();
    if (f.gate) t.gate = f.gate->item();
    else if (config_.model.fusion == model::FusionMode::Average) t.gate = 0.5;
    t.sym_kl = model::sym_kl(t.p0, t.pe);
    return t;
}

Evaluation Session::evaluate(const std::vector<text::Record>& records, const diag::RoutingThresholds& thresholds) {
    if (records.empty()) throw MetricError("evaluate: no instances");
    Evaluation ev;
    for (const auto& r : records) {
        num::Tape tape;
        ev.traces.push_back(trace_of(r, featurize(r, false), tape));
        ev.vox.push_back(diag::vox_record(ev.traces.back()));
    }
    diag::ReportContext ctx;
    ctx.thresholds = thresholds;
    ctx.seed = config_.seed;
    ctx.config_fingerprint = config_.fingerprint();
    ctx.fusion_mode = model::fusion_mode_name(config_.model.fusion);
    ev.report = diag::routing_report(ev.traces, ctx);
    return ev;
}

namespace {

// Unweighted CE(fused) + CE(head 0)/2 + CE(head E)/2 from the trace probabilities.
double head_loss(const std::vector<diag::TraceRecord>& traces) {
    double sum = 0.0;
    for (const auto& t : traces) {
        auto ce = [&](const diag::Logits& p) { return -std::log(std::max(p[t.y], model::kProbabilityFloor)); };
        sum += ce(t.pf) + 0.5 * ce(t.p0) + 0.5 * ce(t.pe);
    }
    return traces.empty() ? 0.0 : sum / static_cast<double>(traces.size());
}

} // namespace

TrainSummary Session::train(std::ostream* log) {
    if (splits_.train.empty()) throw ConfigError("train: this session has no training records (loaded checkpoint?)");
    TrainSummary summary;
    std::vector<Instance> train;
    train.reserve(splits_.train.size());
    for (const auto& r : splits_.train) train.push_back(featurize(r, true));

    auto params = model_->parameters();
    std::vector<Tensor> best;
    auto snapshot = [&] {
        best.clear();
        for (auto* p : params) best.push_back(p->value);
    };
    auto restore = [&] {
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
    };
    snapshot();
    std::size_t since_best = 0;
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= config_.max_epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        std::shuffle(order.begin(), order.end(), rng_);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        try {
            for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
                const std::size_t end = std::min(order.size(), start + config_.batch_size);
                num::Tape tape;
                std::vector<model::ForwardOutput> outs;
                std::vector<int> labels;
                model::ForwardOptions opts{.training = true, .dropout_rng = &rng_};
                for (std::size_t i = start; i < end; ++i) {
                    const auto& inst = train[order[i]];
                    outs.push_back(model_->forward(tape, inst.doc, inst.content, inst.m_bar, opts));
                    labels.push_back(inst.doc.label);
                }
                auto loss = model::total_loss(outs, labels, config_.model.lambda_agree, weights_, config_.model.fusion);
                if (!std::isfinite(loss.item())) throw NonFiniteError("training loss is not finite");
                num::zero_grads(params);
                tape.backward(loss);
                if (adam_->step().skipped) ++rec.skipped_steps;
                loss_sum += loss.item();
                ++batches;
            }
        } catch (const NonFiniteError& e) {
            summary.diverged = true;
            summary.divergence_reason = "epoch " + std::to_string(epoch) + ": " + e.what();
            if (log) *log << "diverged: " << summary.divergence_reason << '\n';
            break;
        }
        rec.train_loss = loss_sum / static_cast<double>(batches);
        auto val = evaluate(splits_.val);
        rec.val_f1 = val.report.fused.f1;
        rec.val_accuracy = val.report.fused.accuracy;
        rec.val_sym_kl = val.report.sym_kl_mean;
        rec.val_loss = head_loss(val.traces);
        epoch_ = epoch;
        // ties on F1 go to the lower validation loss
        if (rec.val_f1 > best_val_f1_ || (rec.val_f1 == best_val_f1_ && rec.val_loss < best_val_loss_)) {
            best_val_f1_ = rec.val_f1;
            best_val_loss_ = rec.val_loss;
            summary.best_epoch = epoch;
            rec.improved = true;
            since_best = 0;
            snapshot();
        } else {
            ++since_best;
        }
        summary.history.push_back(rec);
        if (log) {
            char line[200];
            std::snprintf(line, sizeof line,
                          "epoch %3zu  loss %.6f  val_loss %.6f  val_f1 %.4f  val_acc %.4f  val_symkl %.4f%s\n", epoch,
                          rec.train_loss, rec.val_loss, rec.val_f1, rec.val_accuracy, rec.val_sym_kl, rec.improved ? "  *" : "");
            *log << line;
        }
        if (since_best >= config_.patience) {
            summary.early_stopped = true;
            break;
        }
    }
    restore();
    summary.best_val_f1 = best_val_f1_;
    return summary;
}

std::vector<aga::HeadDiagnostics> Session::diagnose_attention(const std::vector<text::Record>& records,
                                                              std::ostream* alpha_out) {
    if (records.empty()) throw MetricError("diagnose-attention: no instances");
    aga::AttentionDiagnostics acc;
    for (const auto& r : records) {
        auto doc = text::make_doc(r, vocab_, config_.l_max);
        num::Tape tape;
        auto enc = model_->encoder().encode(tape, doc, true);
        acc.add(aga::attention_entropy(enc.attention, doc.mask, doc.pos));
        if (alpha_out) {
            json j;
            j["id"] = r.id;
            j["layers"] = json::array();
            for (const auto& layer : enc.attention) {
                json heads = json::array();
                for (const auto& a : layer.alpha) {
                    json rows = json::array();
                    for (std::size_t i = 0; i < a.rows(); ++i) {
                        std::vector<double> row(a.cols());
                        for (std::size_t c = 0; c < a.cols(); ++c) row[c] = a(i, c);
                        rows.push_back(row);
                    }
                    heads.push_back(rows);
                }
                j["layers"].push_back(heads);
            }
            *alpha_out << j.dump() << '\n';
        }
    }
    return acc.mean();
}

void Session::save(const std::string& path) const {
    json j;
    j["format"] = "bimind-checkpoint";
    j["version"] = kCheckpointVersion;
    j["config"] = config_.to_text();
    j["vocab"] = vocab_.tokens();
    j["min_frequency"] = vocab_.min_frequency();
    j["class_weights"] = weights_;
    json params = json::object(), m = json::object(), v = json::object();
    auto plist = model_->parameters();
    for (std::size_t i = 0; i < plist.size(); ++i) {
        params[plist[i]->name] = tensor_json(plist[i]->value);
        m[plist[i]->name] = adam_->first_moments()[i].values();
        v[plist[i]->name] = adam_->second_moments()[i].values();
    }
    j["params"] = params;
    j["adam"] = {{"t", adam_->steps()}, {"m", m}, {"v", v}};
    j["epoch"] = epoch_;
    j["best_val_f1"] = best_val_f1_;
    j["best_val_loss"] = std::isfinite(best_val_loss_) ? json(best_val_loss_) : json(nullptr);
    std::ostringstream rng;
    rng << rng_;
    j["rng"] = rng.str();
    j["splits"] = {{"train", train_ids_}, {"val", val_ids_}, {"test", test_ids_}};
    j["memory"] = {{"file", std::filesystem::path(memory_path(path)).filename().string()},
                   {"seed", bank_.seed()},
                   {"d_s", bank_.dim()},
                   {"n", bank_.size()}};
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    out << j.dump() << '\n';
    if (!out) throw FormatError("writing checkpoint '" + path + "' failed");
    bank_.save(memory_path(path));
}

Session Session::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("checkpoint '" + path + "': " + e.what());
    }
    Session s;
    try {
        if (j.at("format") != "bimind-checkpoint" || j.at("version").get<int>() != kCheckpointVersion) {
            throw FormatError("checkpoint '" + path + "': unsupported format or version");
        }
        std::istringstream cfg(j.at("config").get<std::string>());
        s.config_ = parse_config(cfg);
        s.vocab_ = text::Vocabulary::from_tokens(j.at("vocab").get<std::vector<std::string>>(),
                                                 j.at("min_frequency").get<std::size_t>());
        s.weights_ = j.at("class_weights").get<std::array<double, model::kClasses>>();
        s.config_.model.encoder.vocab_size = s.vocab_.size();
        s.train_ids_ = j.at("splits").at("train").get<std::vector<std::string>>();
        s.val_ids_ = j.at("splits").at("val").get<std::vector<std::string>>();
        s.test_ids_ = j.at("splits").at("test").get<std::vector<std::string>>();
        s.init_model();
        auto plist = s.model_->parameters();
        const auto& params = j.at("params");
        const auto& m = j.at("adam").at("m");
        const auto& v = j.at("adam").at("v");
        if (params.size() != plist.size()) {
            throw CompatibilityError("checkpoint holds " + std::to_string(params.size()) + " parameters, model has " +
                                     std::to_string(plist.size()));
        }
        for (std::size_t i = 0; i < plist.size(); ++i) {
            auto& p = *plist[i];
            if (!params.contains(p.name)) throw CompatibilityError("checkpoint lacks parameter '" + p.name + "'");
            Tensor t = tensor_from_json(params.at(p.name));
            if (!num::same_shape(t, p.value)) {
                throw CompatibilityError("parameter '" + p.name + "' has shape " + num::shape_string(t.shape()) +
                                         ", model expects " + num::shape_string(p.value.shape()));
            }
            p.value = std::move(t);
            p.zero_grad();
            s.adam_->first_moments()[i] = Tensor(p.value.shape(), m.at(p.name).get<std::vector<double>>());
            s.adam_->second_moments()[i] = Tensor(p.value.shape(), v.at(p.name).get<std::vector<double>>());
        }
        s.adam_->set_steps(j.at("adam").at("t").get<std::size_t>());
        s.epoch_ = j.at("epoch").get<std::size_t>();
        s.best_val_f1_ = j.at("best_val_f1").get<double>();
        if (const auto& bl = j.at("best_val_loss"); !bl.is_null()) s.best_val_loss_ = bl.get<double>();
        std::istringstream rng(j.at("rng").get<std::string>());
        rng >> s.rng_;
    } catch (const json::exception& e) {
        throw FormatError("checkpoint '" + path + "': " + e.what());
    }
    s.provider_ = std::make_unique<mem::HashingProvider>(s.config_.model.d_s, s.config_.memory_seed);
    s.bank_ = mem::MemoryBank::load(memory_path(path));
    s.bank_.check_compatible(*s.provider_);
    if (s.bank_.ids() != s.train_ids_) throw CompatibilityError("memory file rows do not match the checkpoint's train split");
    return s;
}

json to_json(const TrainSummary& s) {
    json hist = json::array();
    for (const auto& e : s.history) {
        hist.push_back({{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"val_loss", e.val_loss},
                        {"val_f1", e.val_f1},
                        {"val_accuracy", e.val_accuracy},
                        {"val_sym_kl", e.val_sym_kl},
                        {"skipped_steps", e.skipped_steps},
                        {"improved", e.improved}});
    }
    return {{"history", hist},
            {"best_epoch", s.best_epoch},
            {"best_val_f1", s.best_val_f1},
            {"early_stopped", s.early_stopped},
            {"diverged", s.diverged},
            {"divergence_reason", s.divergence_reason}};
}

} // namespace bimind::pipe
