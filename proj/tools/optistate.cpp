// optistate: dataset generation, ViT and GRU training, evaluation and
// report emission.
//
// Exit codes: 0 ok, 2 usage or config error, 3 numerical divergence, 4 I/O.

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "optistate/pipeline/evaluate.hpp"
#include "optistate/pipeline/suite.hpp"
#include "optistate/report/report.hpp"
#include "run_manifest.hpp"

namespace fs = std::filesystem;
using namespace optistate;

namespace {

struct CommonOptions {
    std::string config;
    std::uint64_t seed = 1;
    std::string out;
    std::string profile = "small";
    CLI::Option* seed_opt = nullptr;
    CLI::Option* profile_opt = nullptr;
};

void add_common(CLI::App& cmd, CommonOptions& o, bool out_required = true) {
    cmd.add_option("--config", o.config, "key = value config file, or a manifest.json from an earlier run")
        ->check(CLI::ExistingFile);
    o.seed_opt = cmd.add_option("--seed", o.seed, "Seed for every random stream of the run");
    o.profile_opt = cmd.add_option("--profile", o.profile, "Size profile")->check(CLI::IsMember({"paper", "small"}));
    auto* out = cmd.add_option("--out", o.out, "Output directory");
    if (out_required) out->required();
}

/// Config file, profile and seed after every override is applied.
struct Resolved {
    SimConfig sim;
    Profile profile;
    std::uint64_t seed = 1;
    KeyValueConfig run_keys;  // run.* bookkeeping from a reloaded manifest

    KeyValueConfig to_kv() const {
        KeyValueConfig kv = sim.to_kv();
        const KeyValueConfig prof = profile_to_kv(profile);
        for (const auto& [k, v] : prof.entries()) kv.set(k, v);
        kv.set("run.seed", seed);
        return kv;
    }
};

Resolved resolve(const CommonOptions& o) {
    KeyValueConfig file;
    if (!o.config.empty()) {
        file = fs::path(o.config).extension() == ".json" ? RunManifest::load_config(o.config)
                                                         : KeyValueConfig::load(o.config);
    }
    KeyValueConfig rest;
    Resolved r;
    for (const auto& [k, v] : file.entries()) (k.rfind("run.", 0) == 0 ? r.run_keys : rest).set(k, v);
    auto [sim_kv, prof_kv] = split_config(rest);
    std::string name = o.profile;
    if (o.profile_opt->count() == 0 && prof_kv.has("profile.name")) name = prof_kv.get_string("profile.name", name);
    r.profile = apply_profile_overrides(profile_from_name(name), prof_kv);
    r.sim = SimConfig::from_kv(sim_kv, SimConfig{});
    r.sim.camera.height = r.sim.camera.width = r.profile.image_size;
    r.seed = o.seed_opt->count() > 0 ? o.seed : r.run_keys.get_u64("run.seed", o.seed);
    return r;
}

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<fs::path> list_datasets(const std::string& dir, const std::string& prefix) {
    if (!fs::is_directory(dir)) throw IoError("data directory " + dir + " does not exist");
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.rfind(prefix, 0) == 0 && e.path().extension() == ".ostd") {
            out.push_back(e.path());
        }
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) throw ConfigError("no " + prefix + "*.ostd datasets in " + dir + " (run simulate first)");
    return out;
}

std::string out_file(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_loss(const std::string& dir, const std::string& stem, const std::vector<double>& history,
                const std::string& title, RunManifest& m) {
    write_text_file(out_file(dir, stem + ".csv"), loss_csv(history));
    m.outputs.push_back(out_file(dir, stem + ".csv"));
    if (!history.empty()) {
        write_text_file(out_file(dir, stem + ".svg"), loss_figure(history, title).render());
        m.outputs.push_back(out_file(dir, stem + ".svg"));
    }
}

int cmd_simulate(const CommonOptions& o) {
    const auto t0 = Clock::now();
    const Resolved r = resolve(o);
    fs::create_directories(o.out);
    RunManifest m;
    m.command = "simulate";
    m.config = r.to_kv();
    m.seeds["suite"] = r.seed;
    for (const auto& e : make_suite(r.profile, r.sim, r.seed)) {
        const auto ts = Clock::now();
        const Dataset ds = simulate(e.config);
        const std::string path = out_file(o.out, e.name + ".ostd");
        write_dataset(ds, path);
        e.config.to_kv().save(out_file(o.out, e.name + ".cfg"));
        m.outputs.push_back(path);
        m.outputs.push_back(out_file(o.out, e.name + ".cfg"));
        m.seeds[e.name] = e.config.seed;
        m.timings_s[e.name] = seconds_since(ts);
        std::cout << "wrote " << path << " (" << ds.frames.size() << " frames, " << ds.images.size()
                  << " depth images)\n";
    }
    m.timings_s["total"] = seconds_since(t0);
    m.save(out_file(o.out, "manifest_simulate.json"));
    return 0;
}

int cmd_train_vit(const CommonOptions& o, const std::string& data) {
    const auto t0 = Clock::now();
    const Resolved r = resolve(o);
    RunManifest m;
    m.command = "train-vit";
    m.config = r.to_kv();
    m.seeds["vit"] = r.seed;
    std::vector<Dataset> sets;
    for (const auto& p : list_datasets(data, "train_")) {
        sets.push_back(read_dataset(p.string()));
        m.inputs.push_back(p.string());
        if (!sets.back().has_depth()) throw ConfigError(p.string() + " has no depth images");
        if (sets.back().image_height != r.profile.vit.image_h || sets.back().image_width != r.profile.vit.image_w) {
            throw ConfigError(p.string() + ": image size does not match vit.image_h/vit.image_w");
        }
    }
    std::vector<const Dataset*> ptrs;
    for (const auto& s : sets) ptrs.push_back(&s);
    const auto images = subsample_images(ptrs, r.profile.vit_max_images);
    m.timings_s["load"] = seconds_since(t0);
    std::cout << "training ViT on " << images.size() << " images\n";

    VitTrainConfig hp = r.profile.vit_train;
    hp.seed = r.seed;
    const auto tt = Clock::now();
    const auto res = train_vit<float>(images, r.profile.vit, hp, [](int ep, double loss) {
        std::cout << "epoch " << ep + 1 << " loss " << loss << "\n" << std::flush;
    });
    m.timings_s["train"] = seconds_since(tt);

    fs::create_directories(o.out);
    const std::string ck = out_file(o.out, "vit.osvt");
    save_vit(ck, res.model);
    m.outputs.push_back(ck);
    write_loss(o.out, "vit_loss", res.loss_history, "ViT reconstruction loss", m);
    m.timings_s["total"] = seconds_since(t0);
    m.save(out_file(o.out, "manifest_train-vit.json"));
    return 0;
}

InputAblation ablation_from_flags(bool no_kf, bool no_vision) {
    if (no_kf && no_vision) throw ConfigError("choose at most one of --ablate-kf-input and --ablate-vision");
    return no_kf ? InputAblation::no_kf : no_vision ? InputAblation::no_vision : InputAblation::none;
}

int cmd_train_gru(const CommonOptions& o, const std::string& data, const std::string& vit_path,
                  InputAblation ablation) {
    const auto t0 = Clock::now();
    const Resolved r = resolve(o);
    const Vit<float> vit = load_vit<float>(vit_path);
    RunManifest m;
    m.command = "train-gru";
    m.config = r.to_kv();
    m.config.set("run.ablation", to_string(ablation).c_str());
    m.seeds["gru"] = r.seed;
    m.inputs.push_back(vit_path);
    const FeatureLayout lay{vit.config().embed};
    std::vector<TrajectoryFeatures> feats;
    for (const auto& p : list_datasets(data, "train_")) {
        const Dataset ds = read_dataset(p.string());
        m.inputs.push_back(p.string());
        // Vision columns are masked for this variant, so skip encoding.
        const auto latents = ablation == InputAblation::no_vision ? std::vector<Eigen::VectorXd>{}
                                                                  : image_latents(ds, &vit);
        feats.push_back(compute_features(ds, latents, lay, FilterConfig{}, p.stem().string()));
    }
    m.timings_s["features"] = seconds_since(t0);
    std::vector<const TrajectoryFeatures*> ptrs;
    for (const auto& f : feats) ptrs.push_back(&f);

    GruTrainConfig hp = r.profile.gru_train;
    hp.seed = r.seed;
    const auto tt = Clock::now();
    std::cout << "training GRU (" << to_string(ablation) << ") on " << feats.size() << " trajectories\n";
    const auto res = train_gru(ptrs, r.profile.gru, hp, ablation, [](int ep, double loss) {
        std::cout << "epoch " << ep + 1 << " loss " << loss << "\n" << std::flush;
    });
    m.timings_s["train"] = seconds_since(tt);

    fs::create_directories(o.out);
    const std::string variant = to_string(ablation);
    const std::string ck = out_file(o.out, "gru_" + variant + ".osgr");
    save_gru(ck, res.model);
    m.outputs.push_back(ck);
    write_loss(o.out, "gru_loss_" + variant, res.loss_history, "GRU training loss (" + variant + ")", m);
    m.timings_s["total"] = seconds_since(t0);
    m.save(out_file(o.out, "manifest_train-gru_" + variant + ".json"));
    return 0;
}

struct EvalOptions {
    std::string data;
    std::string vit;
    std::vector<std::string> gru;
    bool ablate_kf = false;
    bool ablate_vision = false;
    bool kf_only = false;
};

int cmd_evaluate(const CommonOptions& o, const EvalOptions& e) {
    const auto t0 = Clock::now();
    const Resolved r = resolve(o);
    RunManifest m;
    m.command = "evaluate";
    m.config = r.to_kv();
    if (!e.kf_only && e.gru.empty()) throw ConfigError("evaluate: pass --gru checkpoints or --kf-only");
    const bool flagged = e.ablate_kf || e.ablate_vision;
    const InputAblation wanted = ablation_from_flags(e.ablate_kf, e.ablate_vision);

    std::vector<GruModel> models;
    std::vector<std::string> variants;
    if (!e.kf_only) {
        for (const auto& p : e.gru) {
            models.push_back(load_gru(p));
            m.inputs.push_back(p);
            const InputAblation a = models.back().ablation;
            if (flagged && a != wanted) {
                throw ConfigError(p + " was trained with '" + to_string(a) + "' inputs, but '" + to_string(wanted) +
                                  "' was requested");
            }
            std::string name = to_string(a);
            while (std::find(variants.begin(), variants.end(), name) != variants.end()) name += "+";
            variants.push_back(name);
        }
    }
    std::optional<Vit<float>> vit;
    if (!e.vit.empty()) {
        vit.emplace(load_vit<float>(e.vit));
        m.inputs.push_back(e.vit);
    }
    int latent_dim = vit ? vit->config().embed : 0;
    for (const auto& g : models) {
        if (vit && g.latent_dim != latent_dim) {
            throw ConfigError("evaluate: GRU checkpoint expects a " + std::to_string(g.latent_dim) +
                              "-dim latent but the ViT produces " + std::to_string(latent_dim));
        }
        if (!vit) {
            if (g.ablation != InputAblation::no_vision) {
                throw ConfigError("evaluate: --vit is required for checkpoints that use vision inputs");
            }
            latent_dim = g.latent_dim;
        }
    }

    fs::create_directories(o.out);
    std::vector<EstimatorColumn> cols(1 + models.size());
    cols[0].name = "kf-only";
    for (std::size_t i = 0; i < models.size(); ++i) cols[i + 1].name = variants[i];
    std::vector<Eigen::MatrixXd> truth;
    std::vector<std::vector<Eigen::MatrixXd>> mus(models.size());
    for (const auto& p : list_datasets(e.data, "test_")) {
        const Dataset ds = read_dataset(p.string());
        m.inputs.push_back(p.string());
        const std::string traj = p.stem().string();
        const auto latents = vit ? image_latents(ds, &*vit) : std::vector<Eigen::VectorXd>{};
        const auto tf = compute_features(ds, latents, FeatureLayout{latent_dim}, FilterConfig{}, traj);
        if (!tf.has_truth()) throw MissingTruthError("evaluate: " + p.string() + " has no ground truth");
        truth.push_back(tf.truth);
        cols[0].x.push_back(tf.kf);
        std::vector<std::pair<std::string, const Eigen::MatrixXd*>> overlay{{"kf-only", &cols[0].x.back()}};
        std::vector<GruPrediction> preds;
        for (std::size_t i = 0; i < models.size(); ++i) {
            preds.push_back(predict_trajectory(models[i], tf));
            cols[i + 1].x.push_back(preds.back().x_bar);
            mus[i].push_back(preds.back().mu);
        }
        for (std::size_t i = 0; i < models.size(); ++i) {
            overlay.emplace_back(variants[i], &preds[i].x_bar);
            EvalSeries es{traj, variants[i], tf.time, tf.truth, tf.kf, preds[i].x_bar, preds[i].mu};
            const std::string csv = out_file(o.out, "eval_" + traj + "_" + variants[i] + ".csv");
            write_text_file(csv, eval_csv(es));
            m.outputs.push_back(csv);
        }
        const std::string svg = out_file(o.out, "overlay_" + traj + ".svg");
        write_text_file(svg, overlay_figure(traj + ": truth and estimates", tf.time, tf.truth, overlay).render());
        m.outputs.push_back(svg);
        std::cout << "evaluated " << traj << "\n";
    }

    const RmseTable table = rmse_table(cols, truth);
    write_text_file(out_file(o.out, "rmse.csv"), rmse_csv(table));
    write_text_file(out_file(o.out, "improvement.csv"), improvement_csv(table, "kf-only"));
    m.outputs.push_back(out_file(o.out, "rmse.csv"));
    m.outputs.push_back(out_file(o.out, "improvement.csv"));

    std::ostringstream s;
    s << "RMSE against simulator truth over " << truth.size() << " held-out trajectories.\n"
      << "Baseline column: kf-only (the filter alone; no visual-inertial baseline exists in simulation).\n\n";
    s << std::left << std::setw(10) << "component";
    for (const auto& n : table.names) s << std::right << std::setw(14) << n;
    s << "\n";
    for (int c = 0; c < 13; ++c) {
        s << std::left << std::setw(10) << (c < 12 ? state_component_names()[static_cast<std::size_t>(c)] : "average");
        for (Eigen::Index j = 0; j < table.rmse.cols(); ++j) {
            s << std::right << std::setw(14) << std::setprecision(5) << (c < 12 ? table.rmse(c, j) : table.average()(j));
        }
        s << "\n";
    }
    const Eigen::VectorXd avg = table.average();
    for (std::size_t i = 0; i < models.size(); ++i) {
        s << "\n" << variants[i] << ": average RMSE improvement over kf-only "
          << std::setprecision(3) << 100.0 * (avg(0) - avg(static_cast<Eigen::Index>(i + 1))) / avg(0)
          << "%, Spearman(mu, |error|) " << uncertainty_rank_correlation(cols[i + 1].x, mus[i], truth);
    }
    s << "\n";
    write_text_file(out_file(o.out, "summary.txt"), s.str());
    m.outputs.push_back(out_file(o.out, "summary.txt"));
    std::cout << "\n" << s.str();
    m.timings_s["total"] = seconds_since(t0);
    m.save(out_file(o.out, "manifest_evaluate.json"));
    return 0;
}

int cmd_report(const CommonOptions& o, const std::string& run) {
    const auto t0 = Clock::now();
    const std::string out = o.out.empty() ? out_file(run, "report") : o.out;
    RunManifest m;
    m.command = "report";
    m.inputs.push_back(run);
    m.outputs = build_report(run, out);
    for (const auto& f : m.outputs) std::cout << "wrote " << f << "\n";
    m.timings_s["total"] = seconds_since(t0);
    m.save(out_file(out, "manifest_report.json"));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"OptiState: Kalman filter plus learned correction for legged-robot trunk state estimation"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    app.set_version_flag("--version", std::string(OPTISTATE_VERSION));

    CommonOptions sim_o, vit_o, gru_o, eval_o, rep_o;
    std::string vit_data, gru_data, gru_vit, report_run;
    bool gru_no_kf = false, gru_no_vision = false;
    EvalOptions ev;

    auto* sim = app.add_subcommand("simulate", "Generate the 16 training and 4 held-out datasets");
    add_common(*sim, sim_o);

    auto* tv = app.add_subcommand("train-vit", "Train the depth autoencoder on train_*.ostd images");
    add_common(*tv, vit_o);
    tv->add_option("--data", vit_data, "Dataset directory written by simulate")->required();

    auto* tg = app.add_subcommand("train-gru", "Train the correction network (requires a ViT checkpoint)");
    add_common(*tg, gru_o);
    tg->add_option("--data", gru_data, "Dataset directory written by simulate")->required();
    tg->add_option("--vit", gru_vit, "ViT checkpoint from train-vit")->required();
    tg->add_flag("--ablate-kf-input", gru_no_kf, "Zero the filter-estimate input columns");
    tg->add_flag("--ablate-vision", gru_no_vision, "Zero the depth-latent input columns");

    auto* evc = app.add_subcommand("evaluate", "RMSE of the filter and each GRU checkpoint on test_*.ostd");
    add_common(*evc, eval_o);
    evc->add_option("--data", ev.data, "Dataset directory written by simulate")->required();
    evc->add_option("--vit", ev.vit, "ViT checkpoint (needed unless every GRU is a no-vision variant)");
    evc->add_option("--gru", ev.gru, "GRU checkpoint; repeat for several variants");
    evc->add_flag("--ablate-kf-input", ev.ablate_kf, "Require the checkpoints to be no-KF-input variants");
    evc->add_flag("--ablate-vision", ev.ablate_vision, "Require the checkpoints to be no-vision variants");
    evc->add_flag("--kf-only", ev.kf_only, "Evaluate the filter alone");

    auto* rep = app.add_subcommand("report", "Uncertainty-band plots and tables from an evaluate run");
    add_common(*rep, rep_o, false);
    rep->add_option("--run", report_run, "Directory written by evaluate")->required();

    try {
        app.parse(argc, argv);
        if (*sim) return cmd_simulate(sim_o);
        if (*tv) return cmd_train_vit(vit_o, vit_data);
        if (*tg) return cmd_train_gru(gru_o, gru_data, gru_vit, ablation_from_flags(gru_no_kf, gru_no_vision));
        if (*evc) return cmd_evaluate(eval_o, ev);
        if (*rep) return cmd_report(rep_o, report_run);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
