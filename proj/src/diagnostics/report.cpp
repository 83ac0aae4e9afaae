#include "bimind/diagnostics/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bimind/errors.hpp"

namespace bimind::diag {

using nlohmann::json;

double vox(std::span<const double> z0, std::span<const double> ze, int y) {
    if (z0.size() != ze.size()) throw DimensionError("vox: logit vectors differ in length");
    if (y < 0 || static_cast<std::size_t>(y) >= z0.size()) throw LabelError("vox: label " + std::to_string(y));
    return ze[static_cast<std::size_t>(y)] - z0[static_cast<std::size_t>(y)];
}

VoxCategory vox_category(double v, double eps) {
    if (v > eps) return VoxCategory::Helps;
    if (v < -eps) return VoxCategory::Hurts;
    return VoxCategory::Neutral;
}

std::string vox_category_name(VoxCategory c) {
    switch (c) {
    case VoxCategory::Helps: return "helps";
    case VoxCategory::Hurts: return "hurts";
    case VoxCategory::Neutral: return "neutral";
    }
    return "neutral";
}

json to_json(const TraceRecord& t) {
    json j;
    j["id"] = t.id;
    j["y"] = t.y;
    j["z0"] = t.z0;
    j["zE"] = t.ze;
    j["zF"] = t.zf;
    j["p0"] = t.p0;
    j["pE"] = t.pe;
    j["pF"] = t.pf;
    j["H0"] = t.h0;
    j["HE"] = t.he;
    j["g"] = t.gate ? json(*t.gate) : json(nullptr);
    j["sym_kl"] = t.sym_kl;
    return j;
}

TraceRecord trace_from_json(const json& j) {
    TraceRecord t;
    try {
        t.id = j.at("id").get<std::string>();
        t.y = j.at("y").get<int>();
        t.z0 = j.at("z0").get<Logits>();
        t.ze = j.at("zE").get<Logits>();
        t.zf = j.at("zF").get<Logits>();
        t.p0 = j.at("p0").get<Logits>();
        t.pe = j.at("pE").get<Logits>();
        t.pf = j.at("pF").get<Logits>();
        t.h0 = j.at("H0").get<double>();
        t.he = j.at("HE").get<double>();
        if (!j.at("g").is_null()) t.gate = j.at("g").get<double>();
        t.sym_kl = j.value("sym_kl", 0.0);
    } catch (const json::exception& e) {
        throw FormatError(std::string("trace record: ") + e.what());
    }
    if (t.y < 0 || static_cast<std::size_t>(t.y) >= kClasses) throw LabelError("trace record: label " + std::to_string(t.y));
    return t;
}

void write_traces(std::ostream& out, const std::vector<TraceRecord>& traces) {
    for (const auto& t : traces) out << to_json(t).dump() << '\n';
}

std::vector<TraceRecord> read_traces(std::istream& in) {
    std::vector<TraceRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(trace_from_json(json::parse(line)));
        } catch (const json::parse_error& e) {
            throw FormatError("trace line " + std::to_string(lineno) + ": " + e.what());
        } catch (const FormatError& e) {
            throw FormatError("trace line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::vector<TraceRecord> load_traces(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open trace file '" + path + "'");
    return read_traces(in);
}

std::size_t argmax(const Logits& z) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < z.size(); ++k)
        if (z[k] > z[best]) best = k;
    return best;
}

VoxRecord vox_record(const TraceRecord& t, double eps) {
    VoxRecord r;
    r.id = t.id;
    r.y = t.y;
    r.vox = vox(t.z0, t.ze, t.y);
    r.gate = t.gate;
    r.correct_head0 = argmax(t.z0) == static_cast<std::size_t>(t.y);
    r.correct_headE = argmax(t.ze) == static_cast<std::size_t>(t.y);
    r.category = vox_category(r.vox, eps);
    return r;
}

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

} // namespace

void write_vox_csv(std::ostream& out, const std::vector<VoxRecord>& records) {
    out << "id,y,vox,gate,category\n";
    for (const auto& r : records) {
        out << r.id << ',' << r.y << ',' << fmt("%.17g", r.vox) << ',' << (r.gate ? fmt("%.17g", *r.gate) : "") << ','
            << vox_category_name(r.category) << '\n';
    }
}

Metrics macro_metrics(const std::vector<int>& predictions, const std::vector<int>& labels, std::size_t classes) {
    if (predictions.empty()) throw MetricError("macro_metrics: empty input");
    if (predictions.size() != labels.size()) throw MetricError("macro_metrics: predictions and labels differ in length");
    std::vector<double> tp(classes, 0.0), pred(classes, 0.0), truth(classes, 0.0);
    double correct = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int p = predictions[i], y = labels[i];
        if (p < 0 || y < 0 || static_cast<std::size_t>(p) >= classes || static_cast<std::size_t>(y) >= classes) {
            throw LabelError("macro_metrics: class index outside [0, " + std::to_string(classes) + ")");
        }
        pred[static_cast<std::size_t>(p)] += 1.0;
        truth[static_cast<std::size_t>(y)] += 1.0;
        if (p == y) {
            tp[static_cast<std::size_t>(p)] += 1.0;
            correct += 1.0;
        }
    }
    Metrics m;
    m.accuracy = correct / static_cast<double>(labels.size());
    for (std::size_t k = 0; k < classes; ++k) {
        if (pred[k] == 0.0 && truth[k] == 0.0) m.absent_classes.push_back(k);
        const double pre = pred[k] > 0.0 ? tp[k] / pred[k] : 0.0;
        const double rec = truth[k] > 0.0 ? tp[k] / truth[k] : 0.0;
        const double f1 = pre + rec > 0.0 ? 2.0 * pre * rec / (pre + rec) : 0.0;
        m.precision += pre;
        m.recall += rec;
        m.f1 += f1;
    }
    m.precision /= static_cast<double>(classes);
    m.recall /= static_cast<double>(classes);
    m.f1 /= static_cast<double>(classes);
    return m;
}

RoutingReport routing_report(const std::vector<TraceRecord>& traces, const ReportContext& context) {
    if (traces.empty()) throw MetricError("routing_report: no instances");
    RoutingReport r;
    r.instances = traces.size();
    r.thresholds = context.thresholds;
    r.seed = context.seed;
    r.config_fingerprint = context.config_fingerprint;
    r.fusion_mode = context.fusion_mode;
    r.vox_epsilon = context.vox_epsilon;

    std::vector<int> labels, p0, pe, pf;
    double vox_sum = 0.0, kl_sum = 0.0;
    std::size_t pos = 0, neg = 0, neutral = 0;
    double gate_sum = 0.0;
    std::size_t gates = 0, low = 0, high = 0;
    for (const auto& t : traces) {
        labels.push_back(t.y);
        p0.push_back(static_cast<int>(argmax(t.z0)));
        pe.push_back(static_cast<int>(argmax(t.ze)));
        pf.push_back(static_cast<int>(argmax(t.zf)));
        const double v = vox(t.z0, t.ze, t.y);
        vox_sum += v;
        kl_sum += t.sym_kl;
        switch (vox_category(v, context.vox_epsilon)) {
        case VoxCategory::Helps: ++pos; break;
        case VoxCategory::Hurts: ++neg; break;
        case VoxCategory::Neutral: ++neutral; break;
        }
        if (t.gate) {
            ++gates;
            gate_sum += *t.gate;
            if (*t.gate < context.thresholds.low) ++low;
            if (*t.gate > context.thresholds.high) ++high;
        }
    }
    const double n = static_cast<double>(traces.size());
    r.head0 = macro_metrics(p0, labels);
    r.headE = macro_metrics(pe, labels);
    r.fused = macro_metrics(pf, labels);
    r.vox_mean = vox_sum / n;
    r.sym_kl_mean = kl_sum / n;
    r.pos_pct = 100.0 * static_cast<double>(pos) / n;
    r.neg_pct = 100.0 * static_cast<double>(neg) / n;
    r.neutral_pct = 100.0 * static_cast<double>(neutral) / n;
    if (gates > 0) {
        const double g = static_cast<double>(gates);
        r.gate = GateStats{gate_sum / g, 100.0 * static_cast<double>(low) / g, 100.0 * static_cast<double>(high) / g};
    }
    return r;
}

namespace {

json metrics_json(const Metrics& m) {
    return {{"acc", 100.0 * m.accuracy},
            {"f1", 100.0 * m.f1},
            {"pre", 100.0 * m.precision},
            {"rec", 100.0 * m.recall},
            {"absent_classes", m.absent_classes}};
}

} // namespace

json to_json(const RoutingReport& r) {
    json j;
    j["instances"] = r.instances;
    j["heads"] = {{"head0", metrics_json(r.head0)}, {"headE", metrics_json(r.headE)}, {"fused", metrics_json(r.fused)}};
    j["vox"] = {{"mean", r.vox_mean},
                {"pos_pct", r.pos_pct},
                {"neg_pct", r.neg_pct},
                {"neutral_pct", r.neutral_pct},
                {"epsilon", r.vox_epsilon},
                {"units", "logits"}};
    if (r.gate) {
        j["gate"] = {{"mean", r.gate->mean}, {"pct_below_low", r.gate->pct_low}, {"pct_above_high", r.gate->pct_high}};
    } else {
        j["gate"] = nullptr;
    }
    j["thresholds"] = {{"low", r.thresholds.low}, {"high", r.thresholds.high}};
    j["sym_kl_mean"] = r.sym_kl_mean;
    j["seed"] = r.seed;
    j["config_fingerprint"] = r.config_fingerprint;
    j["fusion_mode"] = r.fusion_mode;
    return j;
}

std::string to_table(const RoutingReport& r) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %8s\n", "Head/Mode", "Acc", "F1", "Pre", "Rec");
    out << line;
    auto row = [&](const char* name, const Metrics& m) {
        std::snprintf(line, sizeof line, "%-10s %8.2f %8.2f %8.2f %8.2f\n", name, 100.0 * m.accuracy, 100.0 * m.f1,
                      100.0 * m.precision, 100.0 * m.recall);
        out << line;
    };
    row("Head_0", r.head0);
    row("Head_E", r.headE);
    row("Fused", r.fused);
    std::snprintf(line, sizeof line, "VoX (logits) %+.2f (%.2f%% pos / %.2f%% neg / %.2f%% neutral)\n", r.vox_mean,
                  r.pos_pct, r.neg_pct, r.neutral_pct);
    out << line;
    if (r.gate) {
        std::snprintf(line, sizeof line, "Gate %.2f (%.2f%% / %.2f%%)  [<%.2f / >%.2f]\n", r.gate->mean, r.gate->pct_low,
                      r.gate->pct_high, r.thresholds.low, r.thresholds.high);
    } else {
        std::snprintf(line, sizeof line, "Gate n/a (fusion mode %s)\n", r.fusion_mode.c_str());
    }
    out << line;
    out << "instances " << r.instances << "  seed " << r.seed << "  config " << r.config_fingerprint << '\n';
    return out.str();
}

} // namespace bimind::diag
