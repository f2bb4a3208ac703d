// facetrack command line: synthetic data generation, encoder pretraining,
// self-supervised domain adaptation, tracking and evaluation.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>

#include "facetrack/eval_metrics.hpp"
#include "facetrack/synthdata.hpp"
#include "facetrack/trainer.hpp"

namespace fs = std::filesystem;
using namespace ft;

namespace {

// flat key=value config; flags override file values
std::map<std::string, std::string> read_config(const std::string& path) {
    std::map<std::string, std::string> kv;
    if (path.empty()) return kv;
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("malformed config line " + std::to_string(lineno) + " in " +
                                     path);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

void apply_config(TrainConfig& c, const std::map<std::string, std::string>& kv) {
    auto get = [&kv](const char* key) -> std::optional<std::string> {
        const auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        return it->second;
    };
    if (auto v = get("learning_rate")) c.learning_rate = std::stod(*v);
    if (auto v = get("momentum")) c.momentum = std::stod(*v);
    if (auto v = get("epochs")) c.epochs = std::stoi(*v);
    if (auto v = get("batch_size")) c.batch_size = std::stoi(*v);
    if (auto v = get("seed")) c.seed = std::stoull(*v);
    if (auto v = get("tau")) c.tau = std::stod(*v);
    if (auto v = get("grad_clip")) c.grad_clip = std::stod(*v);
    if (auto v = get("landmark_dropout")) c.landmark_dropout = std::stod(*v);
    if (auto v = get("deterministic")) c.deterministic = std::stoi(*v) != 0;
    if (auto v = get("checkpoint_every")) c.checkpoint_every = std::stoi(*v);
    if (auto v = get("checkpoint_dir")) c.checkpoint_dir = *v;
    if (auto v = get("lambda_z")) c.weights.lambda_z = std::stod(*v);
    if (auto v = get("lambda_H")) c.weights.lambda_H = std::stod(*v);
    if (auto v = get("lambda_view")) c.weights.lambda_view = std::stod(*v);
    if (auto v = get("lambda_cftc")) c.weights.lambda_cftc = std::stod(*v);
    if (auto v = get("lambda_motc")) c.weights.lambda_motc = std::stod(*v);
    if (auto v = get("lambda_flrc")) c.weights.lambda_flrc = std::stod(*v);
}

void print_effective_adapt_config(const TrainConfig& c, const std::string& arm, bool online) {
    std::printf("arm=%s\n", arm.c_str());
    std::printf("learning_rate=%g\nmomentum=%g\nepochs=%d\nseed=%llu\ntau=%g\n", c.learning_rate,
                c.momentum, c.epochs, static_cast<unsigned long long>(c.seed), c.tau);
    std::printf("lambda_cftc=%g\nlambda_motc=%g\nlambda_flrc=%g\n", c.weights.lambda_cftc,
                c.weights.lambda_motc, c.weights.lambda_flrc);
    std::printf("grad_clip=%g\nlandmark_dropout=%g\nonline=%d\n", c.grad_clip,
                c.landmark_dropout, online ? 1 : 0);
}

DecoderModel load_dataset_decoder(const std::string& dataset_dir) {
    const fs::path p = fs::path(dataset_dir) / "decoder.bin";
    if (!fs::exists(p))
        throw std::runtime_error("dataset has no decoder.bin: " + p.string());
    return load_decoder(p.string());
}

int run(int argc, char** argv) {
    CLI::App app{"synthetic face-tracking pipeline: generation, pretraining, "
                 "self-supervised adaptation, tracking, evaluation"};
    app.require_subcommand(1);

    // --- gen ---
    auto* gen = app.add_subcommand("gen", "generate the lab and wild datasets");
    uint64_t gen_seed = 1;
    int gen_frames = 150, gen_lab_frames = -1, gen_views = 3, gen_res = 128;
    int gen_d = 16, gen_T = 64, gen_grid = 15;
    std::string gen_out, gen_domain_spec;
    bool gen_no_gap = false;
    gen->add_option("--seed", gen_seed, "master seed");
    gen->add_option("--frames", gen_frames, "wild sequence length");
    gen->add_option("--lab-frames", gen_lab_frames, "lab frames (default: --frames)");
    gen->add_option("--views", gen_views, "lab camera views");
    gen->add_option("--res", gen_res, "image resolution");
    gen->add_option("--latent-dim", gen_d, "latent dimension");
    gen->add_option("--texture-size", gen_T, "texture resolution");
    gen->add_option("--grid", gen_grid, "mesh grid size");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--domain-spec", gen_domain_spec, "domain spec key=value file");
    gen->add_flag("--no-gap", gen_no_gap, "disable the wild domain gap");

    // --- pretrain ---
    auto* pre = app.add_subcommand("pretrain", "supervised pretraining on the lab dataset");
    std::string pre_lab, pre_config, pre_out, pre_history;
    int pre_epochs = -1;
    uint64_t pre_seed = 0;
    bool pre_has_seed = false;
    pre->add_option("--lab", pre_lab, "lab dataset directory")->required();
    pre->add_option("--config", pre_config, "key=value config file");
    pre->add_option("--out-model", pre_out, "output encoder checkpoint")->required();
    pre->add_option("--history", pre_history, "loss history CSV");
    pre->add_option("--epochs", pre_epochs, "override epochs");
    pre->add_option("--seed", pre_seed, "override seed");

    // --- adapt ---
    auto* ad = app.add_subcommand("adapt", "self-supervised domain adaptation");
    std::string ad_model, ad_wild, ad_arm = "full", ad_out, ad_config, ad_history;
    int ad_epochs = -1;
    uint64_t ad_seed = 0;
    bool ad_has_seed = false, ad_online = false;
    ad->add_option("--model", ad_model, "pretrained encoder checkpoint")->required();
    ad->add_option("--wild", ad_wild, "wild sequence directory")->required();
    ad->add_option("--arm", ad_arm, "none|flrc|full")
        ->check(CLI::IsMember({"none", "flrc", "full"}));
    ad->add_option("--out-model", ad_out, "output encoder checkpoint")->required();
    ad->add_option("--config", ad_config, "key=value config file");
    ad->add_option("--history", ad_history, "loss history CSV");
    ad->add_option("--epochs", ad_epochs, "override epochs");
    ad->add_option("--seed", ad_seed, "override seed");
    ad->add_flag("--online", ad_online, "single ordered pass instead of offline epochs");

    // --- eval ---
    auto* ev = app.add_subcommand("eval", "stability and marker reprojection report");
    std::vector<std::string> ev_models;
    std::string ev_wild, ev_report;
    ev->add_option("--model", ev_models, "encoder checkpoint (repeatable)")->required();
    ev->add_option("--wild", ev_wild, "wild sequence directory")->required();
    ev->add_option("--report", ev_report, "output report CSV")->required();

    // --- render ---
    auto* rd = app.add_subcommand("render", "render tracked overlays for a sequence");
    std::string rd_model, rd_seq, rd_out;
    rd->add_option("--model", rd_model, "encoder checkpoint")->required();
    rd->add_option("--seq", rd_seq, "sequence directory")->required();
    rd->add_option("--out-dir", rd_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // usage error
    }
    pre_has_seed = pre->count("--seed") > 0;
    ad_has_seed = ad->count("--seed") > 0;

    if (gen->parsed()) {
        if (gen_lab_frames < 0) gen_lab_frames = gen_frames;
        const DecoderModel decoder = synth_identity(gen_seed, gen_d, gen_T, gen_grid);
        const LabDataset lab =
            generate_lab(decoder, gen_lab_frames, gen_views, gen_res, gen_seed + 1);
        DomainSpec spec = benchmark_domain_gap();
        if (!gen_domain_spec.empty()) spec = load_domain_spec(gen_domain_spec);
        if (gen_no_gap) {
            spec = DomainSpec{};
            spec.detect_sigma = 0.0;
        }
        const WildSequence wild = generate_wild(decoder, spec, gen_frames, gen_res, gen_seed + 2);

        const fs::path out(gen_out);
        save_lab(lab, (out / "lab").string());
        save_wild(wild, (out / "wild").string());
        save_decoder(decoder, (out / "lab" / "decoder.bin").string());
        save_decoder(decoder, (out / "wild" / "decoder.bin").string());
        std::printf("lab: %d frames x %d views at %dpx\n", lab.frame_count(), lab.views, gen_res);
        std::printf("wild: %d frames at %dpx\n", wild.frame_count(), gen_res);
        return 0;
    }

    if (pre->parsed()) {
        const DecoderModel decoder = load_dataset_decoder(pre_lab);
        const LabDataset lab = load_lab(pre_lab);
        TrainConfig config = default_pretrain_config();
        apply_config(config, read_config(pre_config));
        if (pre_epochs >= 0) config.epochs = pre_epochs;
        if (pre_has_seed) config.seed = pre_seed;
        EncoderModel encoder = make_encoder(config.seed, lab.resolution, decoder.dim,
                                            static_cast<int>(decoder.landmark_indices.size()));
        const PretrainResult res = pretrain(encoder, decoder, lab, config, pre_history);
        save_encoder(encoder, pre_out);
        if (!res.history.empty())
            std::printf("pretrain: %zu steps, final total=%.6f\n", res.history.size(),
                        res.history.back().total);
        else
            std::printf("pretrain: 0 steps (epochs=0), checkpoint is the initialization\n");
        return 0;
    }

    if (ad->parsed()) {
        EncoderModel encoder = load_encoder(ad_model);
        TrainConfig config = default_adapt_config();
        apply_config(config, read_config(ad_config));
        if (ad_epochs >= 0) config.epochs = ad_epochs;
        if (ad_has_seed) config.seed = ad_seed;
        if (ad_arm == "flrc") {
            config.weights.lambda_cftc = 0.0;
            config.weights.lambda_motc = 0.0;
        }
        print_effective_adapt_config(config, ad_arm, ad_online);
        ColorCorrection cc;
        if (ad_arm == "none") {
            // the w/o-DA arm: checkpoint passes through untouched
            save_encoder(encoder, ad_out);
        } else {
            const DecoderModel decoder = load_dataset_decoder(ad_wild);
            const WildSequence wild = load_wild(ad_wild);
            const AdaptResult res = adapt(encoder, decoder, wild, config, ad_online, ad_history);
            cc = res.cc;
            save_encoder(encoder, ad_out);
            if (!res.history.empty())
                std::printf("adapt: %zu steps, final total=%.6f\n", res.history.size(),
                            res.history.back().total);
        }
        save_color_correction(cc, ad_out + ".cc.txt");
        return 0;
    }

    if (ev->parsed()) {
        const DecoderModel decoder = load_dataset_decoder(ev_wild);
        const WildSequence wild = load_wild(ev_wild);
        std::vector<ReportRow> rows;
        for (const std::string& model_path : ev_models) {
            const EncoderModel encoder = load_encoder(model_path);
            ColorCorrection cc;
            const std::string cc_path = model_path + ".cc.txt";
            if (fs::exists(cc_path)) cc = load_color_correction(cc_path);
            const TrackResult tr = track(encoder, decoder, cc, wild.frames);
            ReportRow row;
            row.arm = fs::path(model_path).stem().string();
            row.stability = stability(posed_vertex_sequence(tr)).mean;
            row.reprojection =
                marker_reprojection_error(tr, decoder.marker_indices, wild.marker_gt);
            rows.push_back(row);
            std::printf("%s: stability=%.4f reprojection=%.4f\n", row.arm.c_str(),
                        row.stability, row.reprojection);
        }
        write_report_csv(rows, ev_report);
        return 0;
    }

    if (rd->parsed()) {
        const DecoderModel decoder = load_dataset_decoder(rd_seq);
        const WildSequence wild = load_wild(rd_seq);
        const EncoderModel encoder = load_encoder(rd_model);
        ColorCorrection cc;
        const std::string cc_path = rd_model + ".cc.txt";
        if (fs::exists(cc_path)) cc = load_color_correction(cc_path);
        const TrackResult tr = track(encoder, decoder, cc, wild.frames);
        fs::create_directories(rd_out);
        char name[32];
        for (int t = 0; t < wild.frame_count(); ++t) {
            const Image ov = render_overlay(decoder, tr.geoms[t], tr.corrected_tex[t],
                                            tr.poses[t], wild.frames[t]);
            std::snprintf(name, sizeof(name), "overlay_%06d.ppm", t);
            write_ppm((fs::path(rd_out) / name).string(), ov);
        }
        std::printf("render: %d overlays written to %s\n", wild.frame_count(), rd_out.c_str());
        return 0;
    }

    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
