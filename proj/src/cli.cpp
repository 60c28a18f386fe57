#include "tomodiff/cli.hpp"

#include "tomodiff/errors.hpp"
#include "tomodiff/io.hpp"
#include "tomodiff/phantom.hpp"
#include "tomodiff/pipeline.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace tomodiff {

namespace {

struct ReconOpts {
    ReconConfig cfg;
    TaskSpec task;
    BaselineConfig baseline;
    std::string task_name = "svct";
    std::string method;
    std::string model;
    std::string config;
    CLI::Option* sigma_min = nullptr;
    CLI::Option* sigma_max = nullptr;
};

void add_recon_options(CLI::App* app, ReconOpts& o, bool task_options = true) {
    app->add_option("--config", o.config, "JSON config mirroring the reconstruction settings; flags override it")
        ->check(CLI::ExistingFile);
    app->add_option("--model", o.model, "Trained denoiser checkpoint (diffusion methods)")->check(CLI::ExistingFile);
    if (task_options) {
        app->add_option("--task,--task.name", o.task_name, "svct, lact or csmri")->capture_default_str();
        app->add_option("--views,--task.views", o.task.views, "Sparse-view count")->capture_default_str();
        app->add_option("--la-start,--task.la_start", o.task.la_start, "Limited-angle start (deg)")->capture_default_str();
        app->add_option("--la-end,--task.la_end", o.task.la_end, "Limited-angle end (deg)")->capture_default_str();
        app->add_option("--la-views,--task.la_views", o.task.la_views, "Limited-angle view count")->capture_default_str();
        app->add_option("--accel,--task.accel", o.task.accel, "CS-MRI acceleration")->capture_default_str();
        app->add_option("--acs,--task.acs", o.task.acs, "CS-MRI ACS fraction")->capture_default_str();
        app->add_option("--noise-std,--task.noise_std", o.task.noise_std, "Measurement noise std")->capture_default_str();
    }
    app->add_option("--N,--schedule.N", o.cfg.schedule.N, "Diffusion steps")->capture_default_str();
    o.sigma_min = app->add_option("--sigma-min,--schedule.sigma_min", o.cfg.schedule.sigma_min,
                                  "Smallest noise level (default: the model's)");
    o.sigma_max = app->add_option("--sigma-max,--schedule.sigma_max", o.cfg.schedule.sigma_max,
                                  "Largest noise level (default: the model's)");
    app->add_option("--lambda,--admm.lambda", o.cfg.admm.lambda, "TV-z weight")->capture_default_str();
    app->add_option("--rho,--admm.rho", o.cfg.admm.rho, "ADMM penalty")->capture_default_str();
    app->add_flag("--relative-weights,--admm.relative_weights", o.cfg.relative_weights,
                  "Read lambda and rho as multiples of ||A^T A||");
    app->add_option("--M,--admm.M", o.cfg.admm.sweeps, "ADMM sweeps per step")->capture_default_str();
    app->add_option("--K,--admm.K", o.cfg.admm.cg_iters, "CG iterations per sweep")->capture_default_str();
    app->add_option("--n-corrector,--sampler.n_corrector", o.cfg.sampler.n_corrector, "Langevin steps per step")
        ->capture_default_str();
    app->add_option("--snr,--sampler.snr", o.cfg.sampler.snr, "Langevin signal-to-noise ratio")->capture_default_str();
    app->add_option("--sub-batch,--sub_batch", o.cfg.sub_batch, "Slices per denoising chunk")->capture_default_str();
    app->add_flag("--final-projection,--final_projection,!--no-final-projection", o.cfg.final_projection,
                  "Project onto the measurements at the end");
    app->add_option("--final-sweeps,--final_sweeps", o.cfg.final_sweeps, "ART sweeps of the final projection")
        ->capture_default_str();
    app->add_option("--seed", o.cfg.seed, "Sampling seed")->capture_default_str();
    app->add_option("--tv-outer", o.baseline.admm_tv_outer, "admm-tv outer iterations")->capture_default_str();
}

void flatten(const nlohmann::json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it->is_object()) flatten(*it, key, out);
        else if (it->is_string()) out.emplace_back(key, it->get<std::string>());
        else out.emplace_back(key, it->dump());
    }
}

/// Fills options not given on the command line from the JSON config.
void apply_config(CLI::App* app, const std::string& path) {
    if (path.empty()) return;
    std::ifstream f(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse config " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    std::vector<std::pair<std::string, std::string>> kv;
    flatten(j, "", kv);
    for (const auto& [key, value] : kv) {
        CLI::Option* opt = app->get_option_no_throw("--" + key);
        if (!opt) throw ConfigError("unknown config key: " + key);
        if (opt->count() > 0) continue;
        try {
            opt->add_result(value);
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw ConfigError("bad value for config key " + key + ": " + e.what());
        }
    }
}

std::shared_ptr<const DenoiserModel> load_model(const std::string& path) {
    if (path.empty()) return nullptr;
    return std::make_shared<DenoiserModel>(DenoiserModel::load(path));
}

void finish_recon_opts(ReconOpts& o, const DenoiserModel* model) {
    o.task.task = parse_task(o.task_name);
    if (model && model->info().sigma_max > model->info().sigma_min && model->info().sigma_min > 0.0) {
        if (o.sigma_min->count() == 0) o.cfg.schedule.sigma_min = model->info().sigma_min;
        if (o.sigma_max->count() == 0) o.cfg.schedule.sigma_max = model->info().sigma_max;
    }
    o.cfg.validate();
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
    if (path.empty()) {
        out << text << "\n";
        return;
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << text << "\n";
}

nlohmann::json metrics_json(const MetricsReport& m) { return nlohmann::json::parse(to_json(m)); }

} // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Slice-wise diffusion priors with z-direction TV for 3D inverse problems"};
    app.name("tomodiff");
    app.require_subcommand(1);

    // phantom
    PhantomSpec pspec;
    std::string kind = "shepp_logan_3d", phantom_out, phantom_png;
    auto* ph = app.add_subcommand("phantom", "Generate a phantom volume");
    ph->add_option("--kind", kind, "shepp_logan_3d, random_spheres or ellipse_overlay")->capture_default_str();
    ph->add_option("--size", pspec.n, "Cube edge length")->capture_default_str();
    ph->add_option("--seed", pspec.seed, "Generator seed")->capture_default_str();
    ph->add_option("--count", pspec.sphere_count, "Number of spheres")->capture_default_str();
    ph->add_option("--ellipses", pspec.overlay.count, "Number of overlay ellipsoids")->capture_default_str();
    ph->add_option("--out", phantom_out, "Output volume file")->required();
    ph->add_option("--png", phantom_png, "Directory for axial PNG slices");

    // train
    std::size_t tr_size = 64, tr_volumes = 8;
    std::uint64_t tr_data_seed = 1000;
    TrainConfig tcfg;
    SigmaSchedule tsched;
    std::string train_out, loss_out;
    auto* tr = app.add_subcommand("train", "Train the slice denoiser by denoising score matching");
    tr->add_option("--size", tr_size, "Training volume edge length")->capture_default_str();
    tr->add_option("--volumes", tr_volumes, "Number of jittered phantom volumes")->capture_default_str();
    tr->add_option("--data-seed", tr_data_seed, "Seed of the first training volume")->capture_default_str();
    tr->add_option("--epochs", tcfg.epochs, "Passes over the training slices")->capture_default_str();
    tr->add_option("--batch", tcfg.batch_size, "Mini-batch size")->capture_default_str();
    tr->add_option("--lr", tcfg.lr, "Peak learning rate")->capture_default_str();
    tr->add_option("--seed", tcfg.seed, "Initialisation and sampling seed")->capture_default_str();
    tr->add_option("--sigma-min", tsched.sigma_min, "Smallest noise level")->capture_default_str();
    tr->add_option("--sigma-max", tsched.sigma_max, "Largest noise level")->capture_default_str();
    tr->add_option("--N", tsched.N, "Steps of the sampling schedule stored with the model")->capture_default_str();
    tr->add_option("--out", train_out, "Output checkpoint")->required();
    tr->add_option("--loss-out", loss_out, "Write the loss trace as JSON");

    // recon
    ReconOpts ro;
    std::string rc_phantom, rc_out, rc_report, rc_png;
    auto* rc = app.add_subcommand("recon", "Simulate measurements of a volume and reconstruct it");
    rc->add_option("--phantom", rc_phantom, "Ground-truth volume to measure")->required()->check(CLI::ExistingFile);
    rc->add_option("--method", ro.method, "diffmbir-fast, diffmbir-slow, pocs, admm-tv, admm-tv-iso, fbp, zero-filled")
        ->required()
        ->check(CLI::IsMember(method_names()));
    rc->add_option("--out", rc_out, "Output volume file")->required();
    rc->add_option("--report", rc_report, "Run report path (default stdout)");
    rc->add_option("--png", rc_png, "Directory for axial PNG slices");
    add_recon_options(rc, ro);

    // eval
    std::string ev_recon, ev_ref, ev_out;
    double ev_range = 0.0;
    auto* ev = app.add_subcommand("eval", "Per-plane PSNR/SSIM of a reconstruction");
    ev->add_option("--recon", ev_recon, "Reconstructed volume")->required()->check(CLI::ExistingFile);
    ev->add_option("--ref", ev_ref, "Reference volume")->required()->check(CLI::ExistingFile);
    ev->add_option("--range", ev_range, "Data range (default: reference maximum)");
    ev->add_option("--out", ev_out, "Report path (default stdout)");

    // adjoint-check
    std::size_t ac_size = 16;
    int ac_trials = 20;
    std::uint64_t ac_seed = 0;
    double ac_tol = 1e-10;
    auto* ac = app.add_subcommand("adjoint-check", "Inner-product test of every linear operator");
    ac->add_option("--size", ac_size, "Grid edge length")->capture_default_str();
    ac->add_option("--trials", ac_trials, "Random trials per operator")->capture_default_str();
    ac->add_option("--seed", ac_seed, "Seed")->capture_default_str();
    ac->add_option("--tol", ac_tol, "Pass threshold on the relative error")->capture_default_str();

    // sweep
    ReconOpts so;
    so.method = "diffmbir-fast";
    std::string sw_phantom, sw_out;
    std::size_t sw_size = 64;
    std::vector<std::size_t> sw_views{2, 4, 8, 16, 32};
    auto* sw = app.add_subcommand("sweep", "Sparse-view PSNR as a function of the number of views");
    sw->add_option("--views", sw_views, "Comma-separated view counts")->delimiter(',');
    sw->add_option("--phantom", sw_phantom, "Ground-truth volume (default: Shepp-Logan)")->check(CLI::ExistingFile);
    sw->add_option("--size", sw_size, "Shepp-Logan edge length when no phantom is given")->capture_default_str();
    sw->add_option("--method", so.method, "Reconstruction method")
        ->capture_default_str()
        ->check(CLI::IsMember(method_names()));
    sw->add_option("--out", sw_out, "JSON report path");
    add_recon_options(sw, so, false);

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        if (ph->parsed()) {
            pspec.kind = parse_phantom_kind(kind);
            const Volume3 v = make_phantom(pspec);
            write_raw(phantom_out, v);
            if (!phantom_png.empty()) export_png_slices(v, phantom_png);
            out << "wrote " << phantom_out << " (" << pspec.n << "^3)\n";
        } else if (tr->parsed()) {
            const auto data = training_slices(tr_size, tr_volumes, tr_data_seed);
            const auto t0 = std::chrono::steady_clock::now();
            tcfg.on_step = [&](long step, double loss) {
                if (step % 50 == 0) err << "step " << step << " loss " << loss << "\n";
            };
            TrainResult r = train_denoiser(data, tsched, tcfg);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            r.model.save(train_out);
            nlohmann::json j{{"checkpoint", train_out},
                             {"parameters", r.model.parameter_count()},
                             {"steps", r.model.info().steps},
                             {"dataset_hash", r.model.info().dataset_hash},
                             {"seconds", secs}};
            if (!r.loss_trace.empty()) j["final_loss"] = r.loss_trace.back();
            if (!loss_out.empty()) emit(nlohmann::json(r.loss_trace).dump(), loss_out, out);
            out << j.dump(2) << "\n";
        } else if (rc->parsed()) {
            apply_config(rc, ro.config);
            const auto model = load_model(ro.model);
            finish_recon_opts(ro, model.get());
            const auto truth = std::make_shared<const Volume3>(read_raw(rc_phantom));
            ro.cfg.reference = truth;
            const auto A = make_operator(ro.task, truth->shape(), truth->spacing());
            const Measurement y = simulate_measurement(*A, *truth, ro.task.noise_std, ro.task.noise_seed);
            std::unique_ptr<NetworkScorePrior> prior;
            if (model) prior = std::make_unique<NetworkScorePrior>(model);
            const ReconResult r = run_method(ro.method, ro.task, *A, y, prior.get(), ro.cfg, ro.baseline);
            write_raw(rc_out, r.x);
            if (!rc_png.empty()) export_png_slices(r.x, rc_png);
            nlohmann::json j = nlohmann::json::parse(run_report_json(r, ro.cfg));
            j["task"] = to_string(ro.task.task);
            j["output"] = rc_out;
            j["metrics"] = metrics_json(per_plane_metrics(r.x, *truth));
            emit(j.dump(2), rc_report, out);
        } else if (ev->parsed()) {
            const Volume3 x = read_raw(ev_recon);
            const Volume3 ref = read_raw(ev_ref);
            emit(to_json(per_plane_metrics(x, ref, ev_range)), ev_out, out);
        } else if (ac->parsed()) {
            bool ok = true;
            for (const auto& c : adjoint_suite(ac_size, ac_trials, ac_seed)) {
                const bool pass = c.max_rel_error <= ac_tol;
                ok = ok && pass;
                out << std::left << std::setw(10) << c.name << " " << std::scientific << std::setprecision(3)
                    << c.max_rel_error << (pass ? "  ok" : "  FAIL") << "\n";
            }
            return ok ? 0 : 2;
        } else if (sw->parsed()) {
            apply_config(sw, so.config);
            const auto model = load_model(so.model);
            finish_recon_opts(so, model.get());
            const Volume3 truth = sw_phantom.empty() ? shepp_logan_3d(sw_size) : read_raw(sw_phantom);
            std::unique_ptr<NetworkScorePrior> prior;
            if (model) prior = std::make_unique<NetworkScorePrior>(model);
            const auto rows = view_sweep(truth, sw_views, so.method, prior.get(), so.cfg, so.baseline);
            nlohmann::json j = nlohmann::json::array();
            out << "views  psnr_axial  psnr_coronal  psnr_sagittal  psnr_global\n" << std::fixed << std::setprecision(2);
            for (const auto& r : rows) {
                out << std::setw(5) << r.views << "  " << std::setw(10) << r.metrics.psnr[0] << "  " << std::setw(12)
                    << r.metrics.psnr[1] << "  " << std::setw(13) << r.metrics.psnr[2] << "  " << std::setw(11)
                    << r.metrics.global_psnr << "\n";
                j.push_back({{"views", r.views}, {"seconds", r.seconds}, {"metrics", metrics_json(r.metrics)}});
            }
            if (!sw_out.empty()) emit(j.dump(2), sw_out, out);
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

int cli_main(int argc, char** argv) {
    std::vector<std::string> args;
    for (int k = 1; k < argc; ++k) args.emplace_back(argv[k]);
    return cli_main(args, std::cout, std::cerr);
}

} // namespace tomodiff
