// Command-line front end: memory-build, train, eval, vox-report,
// diagnose-attention and synth-gen.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "bimind/errors.hpp"
#include "bimind/memory/memory_bank.hpp"
#include "bimind/pipeline/session.hpp"
#include "bimind/pipeline/synthetic.hpp"

using namespace bimind;
using nlohmann::json;

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
    out << content;
    if (!out) throw FormatError("writing '" + path.string() + "' failed");
}

void write_report(const std::filesystem::path& dir, const pipe::Evaluation& ev) {
    std::filesystem::create_directories(dir);
    write_file(dir / "report.json", diag::to_json(ev.report).dump(2) + "\n");
    write_file(dir / "report.txt", diag::to_table(ev.report));
    std::ostringstream traces, csv;
    diag::write_traces(traces, ev.traces);
    diag::write_vox_csv(csv, ev.vox);
    write_file(dir / "traces.jsonl", traces.str());
    write_file(dir / "vox.csv", csv.str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual-head misinformation classifier with retrieval-augmented knowledge head"};
    app.require_subcommand(1);

    // memory-build
    auto* mb = app.add_subcommand("memory-build", "Embed a dataset into a memory file");
    std::string mb_data, mb_out;
    std::size_t mb_dim = 256;
    std::uint64_t mb_seed = 0;
    mb->add_option("data", mb_data, "JSONL dataset")->required();
    mb->add_option("out", mb_out, "Output memory file")->required();
    mb->add_option("--d-s", mb_dim, "Embedding dimension");
    mb->add_option("--seed", mb_seed, "Hashing encoder seed");

    // train
    auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
    std::string tr_config, tr_data, tr_ckpt, tr_history;
    pipe::Ablation ablation;
    std::size_t tr_seeds = 1;
    tr->add_option("config", tr_config, "key = value config file")->required();
    tr->add_option("data", tr_data, "JSONL dataset")->required();
    tr->add_option("ckpt", tr_ckpt, "Checkpoint path (memory goes to <ckpt>.mem)")->required();
    tr->add_flag("--no-aga", ablation.no_aga, "Plain attention without offsets or temperature");
    tr->add_flag("--no-retrieval", ablation.no_retrieval, "Zero memory vector for every instance");
    tr->add_flag("--no-gate", ablation.no_gate, "Fixed 0.5 logit average instead of the entropy gate");
    tr->add_flag("--no-agreement-head", ablation.no_agreement_head, "Replace the agreement head by the entropy gate");
    tr->add_flag("--no-kl", ablation.no_kl, "Drop the symmetric-KL term");
    tr->add_option("--seeds", tr_seeds, "Train this many consecutive seeds; checkpoints get a .seedN suffix");
    tr->add_option("--history", tr_history, "Write per-epoch history JSON here");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    std::string ev_ckpt, ev_data, ev_dir, ev_split = "test";
    diag::RoutingThresholds thresholds;
    ev->add_option("ckpt", ev_ckpt, "Checkpoint")->required();
    ev->add_option("data", ev_data, "JSONL dataset")->required();
    ev->add_option("report_dir", ev_dir, "Output directory")->required();
    ev->add_option("--split", ev_split, "train, val, test or all")->check(CLI::IsMember({"train", "val", "test", "all"}));
    ev->add_option("--gate-low", thresholds.low, "Knowledge-leaning gate threshold");
    ev->add_option("--gate-high", thresholds.high, "Content-leaning gate threshold");

    // vox-report
    auto* vr = app.add_subcommand("vox-report", "Routing report from a trace file");
    std::string vr_traces, vr_out, vr_csv;
    vr->add_option("traces", vr_traces, "traces.jsonl")->required();
    vr->add_option("out", vr_out, "Report JSON path (table goes to <out>.txt)")->required();
    vr->add_option("--csv", vr_csv, "Per-instance CSV path");
    vr->add_option("--gate-low", thresholds.low, "Knowledge-leaning gate threshold");
    vr->add_option("--gate-high", thresholds.high, "Content-leaning gate threshold");

    // diagnose-attention
    auto* da = app.add_subcommand("diagnose-attention", "Per-head attention entropy and POS mass");
    std::string da_ckpt, da_data, da_out, da_alpha, da_split = "test";
    da->add_option("ckpt", da_ckpt, "Checkpoint")->required();
    da->add_option("data", da_data, "JSONL dataset")->required();
    da->add_option("out", da_out, "Output JSON")->required();
    da->add_option("--split", da_split, "train, val, test or all")->check(CLI::IsMember({"train", "val", "test", "all"}));
    da->add_option("--alpha", da_alpha, "Also dump every attention matrix (JSON lines)");

    // synth-gen
    auto* sg = app.add_subcommand("synth-gen", "Generate a synthetic corpus");
    std::string sg_spec, sg_out;
    std::optional<std::size_t> sg_n;
    std::optional<std::uint64_t> sg_seed;
    sg->add_option("spec", sg_spec, "Preset (knowledge, content) or corpus settings file")->required();
    sg->add_option("out", sg_out, "Output JSONL")->required();
    sg->add_option("--instances", sg_n, "Override instance count");
    sg->add_option("--seed", sg_seed, "Override generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*mb) {
            auto data = text::load_dataset(mb_data);
            mem::HashingProvider provider(mb_dim, mb_seed);
            auto bank = mem::MemoryBank::build(data, provider);
            bank.save(mb_out);
            std::cout << "memory: " << bank.size() << " rows, d_s " << bank.dim();
            if (!bank.zero_replaced().empty()) std::cout << ", " << bank.zero_replaced().size() << " empty texts";
            std::cout << '\n';
        } else if (*tr) {
            auto base = pipe::load_config(tr_config);
            pipe::apply_ablation(base, ablation);
            auto data = text::load_dataset(tr_data);
            if (tr_seeds == 0) throw ConfigError("--seeds must be at least 1");
            bool diverged = false;
            json histories = json::array();
            for (std::size_t s = 0; s < tr_seeds; ++s) {
                auto cfg = base;
                cfg.seed = base.seed + s;
                const std::string ckpt = tr_seeds == 1 ? tr_ckpt : tr_ckpt + ".seed" + std::to_string(cfg.seed);
                auto session = pipe::Session::create(cfg, data);
                auto summary = session.train(&std::cout);
                session.save(ckpt);
                std::cout << "seed " << cfg.seed << ": best epoch " << summary.best_epoch << ", val macro-F1 "
                          << summary.best_val_f1 << " -> " << ckpt << '\n';
                auto h = pipe::to_json(summary);
                h["seed"] = cfg.seed;
                histories.push_back(h);
                diverged = diverged || summary.diverged;
            }
            if (!tr_history.empty()) write_file(tr_history, histories.dump(2) + "\n");
            if (diverged) {
                std::cerr << "error: training diverged; best parameters were kept\n";
                return 3;
            }
        } else if (*ev) {
            auto session = pipe::Session::load(ev_ckpt);
            auto data = text::load_dataset(ev_data);
            auto result = session.evaluate(session.select(data, ev_split), thresholds);
            write_report(ev_dir, result);
            std::cout << diag::to_table(result.report);
        } else if (*vr) {
            auto traces = diag::load_traces(vr_traces);
            diag::ReportContext ctx;
            ctx.thresholds = thresholds;
            auto report = diag::routing_report(traces, ctx);
            write_file(vr_out, diag::to_json(report).dump(2) + "\n");
            write_file(vr_out + ".txt", diag::to_table(report));
            if (!vr_csv.empty()) {
                std::vector<diag::VoxRecord> recs;
                for (const auto& t : traces) recs.push_back(diag::vox_record(t));
                std::ostringstream csv;
                diag::write_vox_csv(csv, recs);
                write_file(vr_csv, csv.str());
            }
            std::cout << diag::to_table(report);
        } else if (*da) {
            auto session = pipe::Session::load(da_ckpt);
            auto data = text::load_dataset(da_data);
            std::ofstream alpha;
            if (!da_alpha.empty()) {
                alpha.open(da_alpha);
                if (!alpha) throw FormatError("cannot open '" + da_alpha + "' for writing");
            }
            auto heads = session.diagnose_attention(session.select(data, da_split), da_alpha.empty() ? nullptr : &alpha);
            json out = json::array();
            for (const auto& h : heads) {
                out.push_back({{"layer", h.layer}, {"head", h.head}, {"mean_entropy", h.mean_entropy}, {"pos_mass", h.pos_mass}});
            }
            write_file(da_out, out.dump(2) + "\n");
        } else if (*sg) {
            auto spec = pipe::parse_synth_spec(sg_spec);
            if (sg_n) spec.instances = *sg_n;
            if (sg_seed) spec.seed = *sg_seed;
            auto corpus = pipe::generate_corpus(spec);
            text::save_dataset(sg_out, corpus);
            std::cout << corpus.size() << " " << spec.kind << " instances -> " << sg_out << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
