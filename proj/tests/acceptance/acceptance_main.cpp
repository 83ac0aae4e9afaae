// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Criteria 5-7 and 10 train on the bundled synthetic corpora with the configs
// in configs/.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "../support/reference_scorer.hpp"
#include "../support/reference_transformer.hpp"
#include "bimind/aga/encoder.hpp"
#include "bimind/diagnostics/report.hpp"
#include "bimind/memory/memory_bank.hpp"
#include "bimind/model/dual_model.hpp"
#include "bimind/numerics/grad_check.hpp"
#include "bimind/pipeline/config.hpp"
#include "bimind/pipeline/session.hpp"
#include "bimind/pipeline/synthetic.hpp"

using namespace bimind;
using num::Tensor;

namespace {

// Tolerances and thresholds, all fixed here.
constexpr double kGradTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr double kGradSeconds = 60.0;
constexpr double kReductionTol = 1e-12;
constexpr double kShiftInvariance = 1e-10;
constexpr double kShiftSensitivity = 1e-6;
constexpr int kOracleBanks = 200;
constexpr double kOracleSeconds = 30.0;
constexpr double kIdentityTol = 1e-12;
constexpr double kKnowledgeMargin = 10.0;  // points
constexpr double kPosPctMin = 60.0;
constexpr double kFusedSlack = 2.0;        // points
constexpr double kKnowledgeSeconds = 600.0;
constexpr double kContentAccMin = 95.0;
constexpr double kContentVoxMax = 0.5;     // logits
constexpr double kReportRawTol = 1e-9;     // percentage points
constexpr double kRetrievalDrop = 5.0;     // points
const std::vector<std::uint64_t> kSeeds = {0, 1, 2};

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int n, const std::string& name, const std::function<Outcome()>& run) {
    Outcome o;
    try {
        o = run();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s  [%2d] %s: %s\n", o.pass ? "PASS" : "FAIL", n, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[1024];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_tensor(num::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.data()) v = dist(rng);
    return t;
}

void randomize(num::Parameter& p, std::mt19937_64& rng, double scale) {
    p.value = random_tensor(p.value.shape(), rng, -scale, scale);
}

text::TokenizedDoc doc_of(const std::vector<std::size_t>& ids) {
    text::TokenizedDoc d;
    d.token_ids = ids;
    for (std::size_t i = 0; i < ids.size(); ++i) d.pos.push_back(static_cast<text::PosCategory>((ids[i] + i) % 5));
    d.mask.assign(ids.size(), 1);
    return d;
}

// ---- 1 ----

Outcome gradient_integrity() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<model::FusionMode> modes = {model::FusionMode::EntropyGate, model::FusionMode::AgreementHead,
                                                  model::FusionMode::Average, model::FusionMode::ProductOfExperts};
    std::string detail;
    bool ok = true;
    for (auto mode : modes) {
        model::ModelConfig c;
        c.encoder.vocab_size = 12;
        c.encoder.d = 8;
        c.encoder.heads = 2;
        c.encoder.layers = 2;
        c.d_c = 4;
        c.d_s = 6;
        c.agreement_hidden = 6;
        c.fusion = mode;
        c.dropout = 0.0;
        std::mt19937_64 rng(101);
        model::BimindModel m(c, rng);
        for (std::size_t l = 0; l < 2; ++l) {
            for (auto* p : {&m.encoder().layer(l).f_q.w2, &m.encoder().layer(l).f_k.w2}) randomize(*p, rng, 0.5);
        }
        std::vector<text::TokenizedDoc> docs{doc_of({2, 3, 4, 5, 6, 7, 8, 9}), doc_of({5, 11}), doc_of({3, 3, 10}),
                                             doc_of({4, 2, 7, 7, 1})};
        std::vector<Tensor> content, mbar;
        for (std::size_t i = 0; i < docs.size(); ++i) {
            content.push_back(random_tensor({1, 4}, rng, 0, 1));
            mbar.push_back(random_tensor({1, 6}, rng, -0.5, 0.5));
        }
        const std::vector<int> labels{1, 0, 0, 1};
        auto objective = [&](num::Tape& t) {
            std::vector<model::ForwardOutput> outs;
            for (std::size_t i = 0; i < docs.size(); ++i) outs.push_back(m.forward(t, docs[i], content[i], mbar[i]));
            return model::total_loss(outs, labels, 0.5, {1.25, 0.8}, mode);
        };
        auto rep = num::grad_check(objective, m.parameters(), {.step = kGradStep, .tol = kGradTol});
        ok = ok && rep.passed;
        detail += fmt("%s %.1e; ", model::fusion_mode_name(mode).c_str(), rep.max_rel_error);
    }
    const double s = seconds_since(t0);
    ok = ok && s < kGradSeconds;
    return {ok, detail + fmt("max rel err vs %.0e, %.1f s (< %.0f s)", kGradTol, s, kGradSeconds)};
}

// ---- 2 ----

Outcome aga_reduction() {
    std::mt19937_64 rng(202);
    aga::EncoderConfig c;
    c.vocab_size = 20;
    c.d = 16;
    c.heads = 4;
    c.layers = 2;
    aga::AgaEncoder enc(c, rng);
    double tau_err = 0.0;
    for (std::size_t l = 0; l < c.layers; ++l) {
        for (double raw : enc.layer(l).temperature.value.data()) tau_err = std::max(tau_err, std::abs(aga::effective_temperature(raw) - 1.0));
    }
    auto doc = doc_of({3, 7, 1, 19, 4, 4, 0});
    doc.mask = {1, 1, 1, 1, 1, 1, 0};
    num::Tape t;
    auto r = enc.encode(t, doc);
    Tensor x({doc.length(), c.d});
    auto pe = aga::sinusoidal_positions(doc.length(), c.d);
    for (std::size_t i = 0; i < doc.length(); ++i) {
        for (std::size_t k = 0; k < c.d; ++k) x(i, k) = enc.embedding().value(doc.token_ids[i], k) + pe(i, k);
    }
    const double enc_err = reference::max_abs_diff(reference::plain_encoder(reference::to_matrix(x), enc, doc.mask), r.sequence.value());

    // Row shift of the query offsets cancels in the softmax; the matching
    // column shift of the key offsets does not.
    auto& layer = enc.layer(0);
    Tensor xs = random_tensor({5, 16}, rng), dq = random_tensor({5, 4}, rng), dk = random_tensor({5, 4}, rng);
    auto alphas = [&](const Tensor& q, const Tensor& k) {
        num::Tape tt;
        return aga::aga_attention(tt.constant(xs), tt.constant(q), tt.constant(k), num::Mask(5, 1), layer, 4, true, true).trace.alpha;
    };
    Tensor dq2 = dq, dk2 = dk;
    for (std::size_t h = 0; h < 4; ++h) {
        dq2(2, h) += 1.5;
        dk2(2, h) += 1.5;
    }
    auto base = alphas(dq, dk), sq = alphas(dq2, dk), sk = alphas(dq, dk2);
    double q_change = 0.0, k_change = 1e300;
    for (std::size_t h = 0; h < 4; ++h) {
        q_change = std::max(q_change, num::max_abs_diff(base[h], sq[h]));
        k_change = std::min(k_change, num::max_abs_diff(base[h], sk[h]));
    }
    const bool ok = tau_err == 0.0 && enc_err <= kReductionTol && q_change <= kShiftInvariance && k_change > kShiftSensitivity;
    return {ok, fmt("|tau-1| %.1e, encoder diff %.2e (<= %.0e), query-row shift %.2e (<= %.0e), key-column shift %.2e (> %.0e)",
                    tau_err, enc_err, kReductionTol, q_change, kShiftInvariance, k_change, kShiftSensitivity)};
}

// ---- 3 ----

Outcome knn_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(303);
    std::uniform_int_distribution<std::size_t> nd(1, 500), dd(2, 256), kd(1, 16);
    std::normal_distribution<double> g;
    std::size_t checked = 0, mismatched = 0, ties = 0;
    for (int b = 0; b < kOracleBanks; ++b) {
        const std::size_t n = nd(rng), d = dd(rng);
        Tensor rows({n, d});
        std::vector<std::string> ids;
        std::vector<int> labels;
        for (std::size_t i = 0; i < n; ++i) {
            // every fifth bank repeats earlier rows to force exact ties
            if (b % 5 == 0 && i > 0 && i % 3 == 0) {
                const std::size_t src = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
                for (std::size_t c = 0; c < d; ++c) rows(i, c) = rows(src, c);
            } else {
                double s = 0;
                for (std::size_t c = 0; c < d; ++c) {
                    rows(i, c) = g(rng);
                    s += rows(i, c) * rows(i, c);
                }
                for (std::size_t c = 0; c < d; ++c) rows(i, c) /= std::sqrt(s);
            }
            ids.push_back("b" + std::to_string(n - i)); // ids deliberately out of row order
            labels.push_back(static_cast<int>(i % 2));
        }
        mem::MemoryBank bank(ids, labels, rows, 0);
        std::vector<double> q(d);
        if (b % 5 == 0) {
            for (std::size_t c = 0; c < d; ++c) q[c] = bank.rows()(n / 2, c);
        } else {
            double s = 0;
            for (auto& v : q) {
                v = g(rng);
                s += v * v;
            }
            for (auto& v : q) v /= std::sqrt(s);
        }
        const bool exclude = b % 2 == 1;
        const std::string ex_id = ids[n / 3];
        const std::size_t k = kd(rng);
        auto nb = mem::topk(q, bank, k, exclude ? std::optional<std::string_view>(ex_id) : std::nullopt);

        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t j = 0; j < n; ++j) {
            if (exclude && j == n / 3) continue;
            double s = 0;
            for (std::size_t c = 0; c < d; ++c) s += q[c] * bank.rows()(j, c);
            all.emplace_back(-s, j);
        }
        std::sort(all.begin(), all.end());
        for (std::size_t i = 1; i < all.size(); ++i) ties += all[i].first == all[i - 1].first;
        const std::size_t take = std::min(k, all.size());
        bool same = nb.indices.size() == take;
        for (std::size_t i = 0; same && i < take; ++i) same = nb.indices[i] == all[i].second;
        mismatched += !same;
        ++checked;
    }
    const double s = seconds_since(t0);
    return {mismatched == 0 && s < kOracleSeconds,
            fmt("%zu banks, %zu mismatches, %zu tied pairs exercised, %.2f s (< %.0f s)", checked, mismatched, ties, s, kOracleSeconds)};
}

// ---- 4 ----

Outcome identity_ladder() {
    std::mt19937_64 rng(404);
    num::Tape t;
    model::FilmParams fp{{"wg", Tensor({5, 4})}, {"bg", Tensor({1, 4})}, {"wb", Tensor({5, 4})}, {"bb", Tensor({1, 4})}};
    Tensor h = random_tensor({1, 4}, rng, -3, 3);
    auto f = model::film(t.constant(h), t.constant(random_tensor({1, 5}, rng)), fp);
    auto same = [](std::span<const double> a, std::span<const double> b) { return std::equal(a.begin(), a.end(), b.begin(), b.end()); };
    const bool film_ok = same(f.value().data(), h.data());

    auto z0 = t.constant(random_tensor({1, 2}, rng, -4, 4)), ze = t.constant(random_tensor({1, 2}, rng, -4, 4));
    auto at1 = model::fuse(z0, ze, t.constant(Tensor({1, 1}, 1.0)), model::FusionMode::EntropyGate);
    auto at0 = model::fuse(z0, ze, t.constant(Tensor({1, 1}, 0.0)), model::FusionMode::EntropyGate);
    const bool gate_ok = same(at1.value().data(), z0.value().data()) && same(at0.value().data(), ze.value().data());

    double kl = 0.0;
    for (int i = 0; i < 20; ++i) {
        const double a = std::uniform_real_distribution<double>(0, 1)(rng);
        const std::vector<double> p{a, 1 - a};
        kl = std::max(kl, std::abs(model::sym_kl(p, p)));
    }
    const std::vector<double> u{0.5, 0.5};
    const double ent_err = std::abs(model::entropy(u) - std::log(2.0));

    diag::Logits z{0.37, -0.37};
    const double v = diag::vox(z, z, 1);

    const bool ok = film_ok && gate_ok && kl <= kIdentityTol && ent_err <= kIdentityTol && v == 0.0;
    return {ok, fmt("film identity %s, gate endpoints %s, max sym_kl(p,p) %.1e, |H(uniform)-ln2| %.1e, VoX(z,z) %g",
                    film_ok ? "exact" : "broken", gate_ok ? "exact" : "broken", kl, ent_err, v)};
}

// ---- training helpers ----

std::string config_path(const std::string& name) { return std::string(BIMIND_CONFIG_DIR) + "/" + name; }

struct Run {
    diag::RoutingReport test;
    diag::RoutingReport val;
    std::vector<diag::TraceRecord> test_traces;
};

Run train_and_evaluate(pipe::RunConfig cfg, const std::vector<text::Record>& data) {
    auto s = pipe::Session::create(cfg, data);
    s.train();
    Run r;
    auto ev = s.evaluate(s.split_records().test);
    r.test = ev.report;
    r.test_traces = ev.traces;
    r.val = s.evaluate(s.split_records().val).report;
    return r;
}

const std::vector<text::Record>& knowledge_corpus() {
    static const auto c = pipe::generate_corpus(pipe::parse_synth_spec("knowledge"));
    return c;
}

const std::vector<text::Record>& content_corpus() {
    static const auto c = pipe::generate_corpus(pipe::parse_synth_spec("content"));
    return c;
}

std::vector<Run> knowledge_runs;  // reused by criterion 8

// ---- 5 ----

Outcome knowledge_direction() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto base = pipe::load_config(config_path("knowledge.cfg"));
    std::string detail = fmt("%zu docs; ", knowledge_corpus().size());
    bool ok = true;
    for (auto seed : kSeeds) {
        auto cfg = base;
        cfg.seed = seed;
        auto r = train_and_evaluate(cfg, knowledge_corpus());
        knowledge_runs.push_back(r);
        const double a0 = 100 * r.test.head0.accuracy, ae = 100 * r.test.headE.accuracy, af = 100 * r.test.fused.accuracy;
        const bool seed_ok = ae >= a0 + kKnowledgeMargin && r.test.vox_mean > 0 && r.test.pos_pct > kPosPctMin &&
                             af >= std::max(a0, ae) - kFusedSlack;
        ok = ok && seed_ok;
        detail += fmt("seed %llu H0 %.1f HE %.1f F %.1f VoX %+.2f pos %.1f%%%s; ", static_cast<unsigned long long>(seed), a0, ae,
                      af, r.test.vox_mean, r.test.pos_pct, seed_ok ? "" : " (miss)");
    }
    const double s = seconds_since(t0);
    ok = ok && s < kKnowledgeSeconds;
    return {ok, detail + fmt("%.1f s (< %.0f s)", s, kKnowledgeSeconds)};
}

// ---- 6 ----

Outcome content_control() {
    const auto base = pipe::load_config(config_path("content.cfg"));
    std::string detail;
    bool ok = true;
    for (auto seed : kSeeds) {
        auto cfg = base;
        cfg.seed = seed;
        auto r = train_and_evaluate(cfg, content_corpus());
        const double a0 = 100 * r.test.head0.accuracy;
        const bool seed_ok = a0 >= kContentAccMin && std::abs(r.test.vox_mean) < kContentVoxMax;
        ok = ok && seed_ok;
        detail += fmt("seed %llu H0 %.1f VoX %+.3f%s; ", static_cast<unsigned long long>(seed), a0, r.test.vox_mean,
                      seed_ok ? "" : " (miss)");
    }
    return {ok, detail + fmt("need H0 >= %.0f, |VoX| < %.1f", kContentAccMin, kContentVoxMax)};
}

// ---- 7 ----

Outcome agreement_effect() {
    const auto base = pipe::load_config(config_path("knowledge.cfg"));
    std::vector<double> kl;
    std::string detail = "seed 0 val sym_kl:";
    for (double lambda : {0.0, 0.1, 1.0}) {
        auto cfg = base;
        cfg.seed = 0;
        cfg.model.lambda_agree = lambda;
        kl.push_back(train_and_evaluate(cfg, knowledge_corpus()).val.sym_kl_mean);
        detail += fmt(" lambda %.1f -> %.4f", lambda, kl.back());
    }
    return {kl[0] > kl[1] && kl[1] > kl[2], detail};
}

// ---- 8 ----

Outcome report_fidelity() {
    if (knowledge_runs.empty()) return {false, "no trained run available"};
    std::size_t compared = 0, display_mismatch = 0;
    double raw = 0.0;
    bool exact_counts = true;
    auto cmp = [&](double ours, double theirs) {
        ++compared;
        raw = std::max(raw, std::abs(ours - theirs));
        display_mismatch += fmt("%.2f", ours) != fmt("%.2f", theirs);
    };
    std::vector<std::string> missing;
    for (const auto& run : knowledge_runs) {
        const auto ref = reference::score_traces(run.test_traces, 0.3, 0.7);
        const auto j = diag::to_json(run.test);
        auto heads = [&](const char* key, const reference::Scores& s) {
            cmp(j["heads"][key]["acc"].get<double>(), s.acc);
            cmp(j["heads"][key]["f1"].get<double>(), s.f1);
            cmp(j["heads"][key]["pre"].get<double>(), s.pre);
            cmp(j["heads"][key]["rec"].get<double>(), s.rec);
        };
        heads("head0", ref.head0);
        heads("headE", ref.headE);
        heads("fused", ref.fused);
        // count-derived percentages and means use the same arithmetic order
        exact_counts = exact_counts && j["vox"]["pos_pct"].get<double>() == ref.pos_pct &&
                       j["vox"]["neg_pct"].get<double>() == ref.neg_pct && j["vox"]["neutral_pct"].get<double>() == ref.neutral_pct &&
                       j["vox"]["mean"].get<double>() == ref.vox_mean && !j["gate"].is_null() &&
                       j["gate"]["pct_below_low"].get<double>() == ref.pct_low &&
                       j["gate"]["pct_above_high"].get<double>() == ref.pct_high && j["gate"]["mean"].get<double>() == ref.gate_mean;
        for (const auto& f : reference::missing_report_fields(j)) missing.push_back(f);
    }
    const bool ok = display_mismatch == 0 && raw <= kReportRawTol && exact_counts && missing.empty();
    std::string miss;
    for (const auto& m : missing) miss += " " + m;
    return {ok, fmt("%zu head metrics: %zu display mismatches, max raw diff %.1e (<= %.0e); vox/gate fields %s; missing fields:%s",
                    compared, display_mismatch, raw, kReportRawTol, exact_counts ? "bitwise equal" : "DIFFER",
                    miss.empty() ? " none" : miss.c_str())};
}

// ---- 9 ----

Outcome determinism() {
    auto cfg = pipe::load_config(config_path("knowledge.cfg"));
    cfg.seed = 5;
    auto once = [&] {
        auto s = pipe::Session::create(cfg, knowledge_corpus());
        s.train();
        auto ev = s.evaluate(s.split_records().test);
        std::ostringstream traces, vox;
        diag::write_traces(traces, ev.traces);
        diag::write_vox_csv(vox, ev.vox);
        return std::vector<std::string>{traces.str(), vox.str(), diag::to_json(ev.report).dump(2), diag::to_table(ev.report)};
    };
    auto a = once(), b = once();
    std::size_t bytes = 0;
    for (const auto& x : a) bytes += x.size();
    return {a == b, fmt("traces, vox csv, report json and table: %zu bytes, %s", bytes, a == b ? "identical" : "DIFFER")};
}

// ---- 10 ----

Outcome ablation_harness() {
    // every flag is on the CLI
    const auto help = std::filesystem::temp_directory_path() / "bimind_acceptance_help.txt";
    const std::string cmd = std::string("\"") + BIMIND_CLI_PATH + "\" train --help > \"" + help.string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    std::ifstream in(help);
    std::stringstream ss;
    ss << in.rdbuf();
    std::filesystem::remove(help);
    std::string missing;
    for (const char* flag : {"--no-aga", "--no-retrieval", "--no-gate", "--no-agreement-head", "--no-kl"}) {
        if (ss.str().find(flag) == std::string::npos) missing += std::string(" ") + flag;
    }

    // each switch changes its own component only
    const auto base = pipe::load_config(config_path("knowledge.cfg"));
    auto changed = [&](pipe::Ablation a) {
        auto c = base;
        pipe::apply_ablation(c, a);
        int n = 0;
        n += c.model.encoder.use_aga != base.model.encoder.use_aga;
        n += c.model.use_retrieval != base.model.use_retrieval;
        n += c.model.fusion != base.model.fusion;
        n += c.model.lambda_agree != base.model.lambda_agree;
        return n;
    };
    auto agree_base = base;
    agree_base.model.fusion = model::FusionMode::AgreementHead;
    auto agree = agree_base;
    pipe::apply_ablation(agree, {.no_agreement_head = true});
    const bool independent = changed({.no_aga = true}) == 1 && changed({.no_retrieval = true}) == 1 &&
                             changed({.no_gate = true}) == 1 && changed({.no_kl = true}) == 1 &&
                             agree.model.fusion != agree_base.model.fusion;

    std::string detail;
    bool drops = true;
    for (std::size_t i = 0; i < kSeeds.size(); ++i) {
        auto cfg = base;
        cfg.seed = kSeeds[i];
        const double with = i < knowledge_runs.size() ? 100 * knowledge_runs[i].test.fused.accuracy
                                                     : 100 * train_and_evaluate(cfg, knowledge_corpus()).test.fused.accuracy;
        pipe::apply_ablation(cfg, {.no_retrieval = true});
        const double without = 100 * train_and_evaluate(cfg, knowledge_corpus()).test.fused.accuracy;
        drops = drops && with - without >= kRetrievalDrop;
        detail += fmt("seed %llu fused %.1f -> %.1f; ", static_cast<unsigned long long>(kSeeds[i]), with, without);
    }
    const bool ok = rc == 0 && missing.empty() && independent && drops;
    return {ok, fmt("CLI flags %s, switches %s; ", missing.empty() ? "present" : ("missing" + missing).c_str(),
                    independent ? "independent" : "OVERLAP") +
                    detail + fmt("need drop >= %.0f", kRetrievalDrop)};
}

} // namespace

int main() {
    report(1, "gradient integrity", gradient_integrity);
    report(2, "AGA reduction", aga_reduction);
    report(3, "kNN oracle", knn_oracle);
    report(4, "identity ladder", identity_ladder);
    report(5, "knowledge-value direction", knowledge_direction);
    report(6, "content-only control", content_control);
    report(7, "agreement regularizer effect", agreement_effect);
    report(8, "report fidelity", report_fidelity);
    report(9, "determinism", determinism);
    report(10, "ablation harness", ablation_harness);
    std::printf("%d of 10 criteria passed\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}
