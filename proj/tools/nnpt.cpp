// nnpt: stage-per-command driver for the perturbative learning loop.
//
// Every stage reads its predecessors' files from the output root and writes
// its own next to them, together with config.resolved.json.

#include "nnpt/pipeline.hpp"
#include "nnpt/verify.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace nnpt;
using nlohmann::json;

namespace {

struct Layout {
    fs::path root;

    fs::path data(int i, const char* split) const { return root / "data" / ("iter" + std::to_string(i) + "_" + split + ".csv"); }
    fs::path ensemble(int i) const { return root / ("ensemble" + std::to_string(i)); }
    fs::path train_log(int i) const { return root / ("train" + std::to_string(i) + "_log.csv"); }
    fs::path member_mape(int i) const { return root / ("ensemble" + std::to_string(i) + "_mape.csv"); }
    fs::path summary(int i) const { return root / ("ensemble" + std::to_string(i) + "_summary.json"); }
    fs::path taylor(int i) const { return root / ("taylor" + std::to_string(i) + ".json"); }
    fs::path taylor_csv(int i, int order) const {
        return root / ("taylor" + std::to_string(i) + "_order" + std::to_string(order) + ".csv");
    }
    fs::path fit() const { return root / "fit.json"; }
    fs::path proxy() const { return root / "proxy.json"; }
    fs::path scan() const { return root / "proxy_scan.csv"; }
    fs::path report() const { return root / "report.json"; }
    fs::path config() const { return root / "config.resolved.json"; }
};

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Error("cannot write " + p.string());
    return os;
}

json read_json(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw MissingArtifact(p.string());
    return json::parse(is);
}

void write_json(const fs::path& p, const json& j) { open_out(p) << j.dump(2) << '\n'; }

/// Flag values that override the config file when given.
struct Overrides {
    std::optional<std::size_t> h0, n_train, n_test, members1, members2, batch, threads;
    std::optional<int> epochs, orders_removed, proxy_shapes, proxy_depths;
    std::optional<std::uint64_t> seed;
    std::optional<double> floor, proxy_max_norm;
    std::optional<std::string> scheme;
};

PipelineConfig preset(const std::string& name) {
    PipelineConfig c; // desk: H0 16, 8 + 8 members, 3000 / 300 samples, 20 epochs
    if (name == "full") {
        c.h0 = 32;
        c.n_train = 30000;
        c.n_test = 3000;
        c.members1 = c.members2 = 100;
    } else if (name != "desk") {
        throw std::invalid_argument("unknown preset '" + name + "' (desk|full)");
    }
    return c;
}

PipelineConfig resolve(const std::string& preset_name, const std::string& config_path, const Overrides& o) {
    PipelineConfig c = preset(preset_name);
    if (!config_path.empty()) apply_json(c, read_json(config_path));
    if (o.h0) c.h0 = *o.h0;
    if (o.n_train) c.n_train = *o.n_train;
    if (o.n_test) c.n_test = *o.n_test;
    if (o.members1) c.members1 = *o.members1;
    if (o.members2) c.members2 = *o.members2;
    if (o.batch) c.batch_size = *o.batch;
    if (o.threads) c.threads = *o.threads;
    if (o.epochs) c.epochs = *o.epochs;
    if (o.orders_removed) c.orders_removed = *o.orders_removed;
    if (o.proxy_shapes) c.proxy_shapes = *o.proxy_shapes;
    if (o.proxy_depths) c.proxy_depths = *o.proxy_depths;
    if (o.seed) c.seed = *o.seed;
    if (o.floor) c.target_floor = *o.floor;
    if (o.proxy_max_norm) c.proxy_max_norm = *o.proxy_max_norm;
    if (o.scheme) c.scheme = scheme_from_string(*o.scheme);
    return c;
}

// --- stages ----------------------------------------------------------------

void gen_data(const PipelineConfig& c, const Layout& L) {
    const Dataset d = generate_dataset(c.h0, c.n_train, c.n_test, stage_seed(c.seed, 0), c.scheme, c.threads);
    save_dataset(d, L.data(0, "train"), L.data(0, "test"));
    std::printf("gen-data: H0=%zu train=%zu test=%zu regenerated=%zu -> %s\n", d.h0, d.train.size(), d.test.size(),
                d.stats.regenerated, L.data(0, "train").parent_path().c_str());
}

Dataset load_iteration(const Layout& L, int i) { return load_dataset(L.data(i, "train"), L.data(i, "test")); }

EnsembleTaylor load_taylor(const Layout& L, int i, double& scale) {
    const json j = read_json(L.taylor(i));
    scale = j.at("target_scale").get<double>();
    return ensemble_taylor_from_json(j.at("coeffs"));
}

void train(const PipelineConfig& c, const Layout& L, int i) {
    if (i < 1) throw std::invalid_argument("--iteration must be >= 1");
    const Dataset d = load_iteration(L, i - 1);
    if (d.h0 != c.h0) throw std::invalid_argument("dataset H0 differs from config h0");
    TrainLog log;
    Ensemble ens = train_ensemble(ensemble_spec(c, i), d.train, &d.test, &log);
    ens.iteration = i;
    ens.target_scale = d.target_scale;
    save_ensemble(ens, L.ensemble(i));
    {
        auto os = open_out(L.train_log(i));
        log.write_csv(os);
    }
    {
        auto os = open_out(L.member_mape(i));
        write_member_mape_csv(os, ens);
    }
    const MapeStats m = ensemble_mape(ens, d.test, c.target_floor);
    json s = {{"iteration", i},
              {"members", ens.size()},
              {"dropped", ens.dropped},
              {"test_mape", m.mape},
              {"test_used", m.used},
              {"test_excluded_below_floor", m.excluded}};
    std::printf("train: iteration %d, %zu members (%zu dropped), test MAPE %.4f%%\n", i, ens.size(), ens.dropped.size(),
                100.0 * m.mape);
    if (i >= 2) {
        // Against the original targets: leading polynomial of the previous
        // ensemble plus this ensemble's prediction.
        double s1 = 1.0;
        const EnsembleTaylor t1 = load_taylor(L, i - 1, s1);
        const Dataset d0 = load_iteration(L, i - 2);
        const MapeStats r = reconstructed_mape(ens, d0.test, t1, s1, c.orders_removed, c.target_floor);
        s["reconstructed_test_mape"] = r.mape;
        std::printf("train: reconstructed MAPE against iteration-%d targets %.4f%%\n", i - 2, 100.0 * r.mape);
    }
    write_json(L.summary(i), s);
}

void taylor(const PipelineConfig& c, const Layout& L, int i, int order) {
    const Ensemble ens = load_ensemble(L.ensemble(i));
    if (order <= 0) order = i == 1 ? std::max(1, c.orders_removed) : 2;
    const Vector zero(ens.input_dim(), 0.0);
    const EnsembleTaylor et = ensemble_taylor(ens.members, zero, order, c.threads);
    write_json(L.taylor(i), {{"format", "nnpt.ensemble_taylor"},
                             {"iteration", i},
                             {"order", order},
                             {"target_scale", ens.target_scale},
                             {"coeffs", to_json(et)}});
    for (int o = 1; o <= order; ++o) {
        auto os = open_out(L.taylor_csv(i, o));
        write_coeffs_csv(os, et.mean, et.std, o);
    }
    std::printf("taylor: iteration %d, order %d, intercept %.6g +- %.3g -> %s\n", i, order,
                et.mean.value * ens.target_scale, et.std.value * std::abs(ens.target_scale), L.taylor(i).c_str());
}

void subtract(const PipelineConfig& c, const Layout& L, int i) {
    const Dataset d = load_iteration(L, i - 1);
    double scale = 1.0;
    const EnsembleTaylor et = load_taylor(L, i, scale);
    const Dataset out = subtract_leading(d, et, scale, c.orders_removed);
    save_dataset(out, L.data(i, "train"), L.data(i, "test"));
    std::printf("subtract: iteration %d -> %d, orders removed 0..%d, residual scale %.6g\n", i - 1, i, c.orders_removed,
                out.target_scale);
}

void print_fit(const char* name, const FitResult& f) {
    std::printf("%s = %.6e +- %.3e  (ref %.6e, ratio %.4f, z %.2f)\n", name, f.mean, f.std, f.ref, f.ratio(), f.z);
}

void fit(const Layout& L, const std::string& only) {
    json out;
    if (only != "beta") {
        double s = 1.0;
        const EnsembleTaylor et = load_taylor(L, 1, s);
        const FitResult a = fit_gradient_kernel(member_gradients(et, s), et.mean.gradient.size());
        print_fit("alpha", a);
        out["alpha"] = to_json(a);
    }
    if (only != "alpha") {
        double s = 1.0;
        const EnsembleTaylor et = load_taylor(L, 2, s);
        const FitResult b = fit_hessian_kernel(member_hessians(et, s), et.mean.gradient.size());
        print_fit("beta", b);
        out["beta"] = to_json(b);
    }
    write_json(L.fit(), out);
}

void proxy(const PipelineConfig&, const Layout& L) {
    double s1 = 1.0, s2 = 1.0;
    const EnsembleTaylor t1 = load_taylor(L, 1, s1);
    const EnsembleTaylor t2 = load_taylor(L, 2, s2);
    const Proxy p = build_proxy(t1, s1, t2, s2);
    write_json(L.proxy(), to_json(p));
    std::printf("proxy: c0 = %.6g +- %.3g -> %s\n", p.c0, p.c0_std, L.proxy().c_str());
}

void validate(const PipelineConfig& c, const Layout& L) {
    const Proxy p = proxy_from_json(read_json(L.proxy()));
    const json f = read_json(L.fit());
    const ProxyReport rep = validate_proxy(p, c.proxy_shapes, c.proxy_depths, c.proxy_max_norm, stage_seed(c.seed, 3), c.scheme);
    {
        auto os = open_out(L.scan());
        write_scan_csv(os, rep);
    }
    std::size_t flagged = 0;
    for (const auto& pt : rep.points) flagged += pt.flagged;
    json r;
    for (const char* k : {"alpha", "beta"})
        if (f.contains(k)) r[k] = f[k];
    r["intercept"] = {{"mean", p.c0}, {"std", p.c0_std}};
    for (int i = 1; i <= 2; ++i)
        if (fs::exists(L.summary(i))) r["ensemble" + std::to_string(i)] = read_json(L.summary(i));
    r["proxy_max_rel_err_le1"] = rep.max_rel_err_le1;
    r["proxy_flagged_points"] = flagged;
    r["proxy_scan"] = L.scan().filename().string();
    write_json(L.report(), r);
    std::printf("validate: max relative error for |U| <= 1: %.4f%% (%zu points flagged) -> %s\n",
                100.0 * rep.max_rel_err_le1, flagged, L.report().c_str());
}

int verify(int nets, std::uint64_t seed) {
    auto rows = verify_derivatives(nets, seed);
    for (auto& r : verify_combinatorics()) rows.push_back(std::move(r));
    int failed = 0;
    std::printf("%-48s %-6s %12s %12s  %s\n", "check", "result", "value", "limit", "detail");
    for (const auto& r : rows) {
        failed += !r.passed;
        std::printf("%-48s %-6s %12.4g %12.4g  %s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.value, r.tolerance,
                    r.detail.c_str());
    }
    std::printf("%zu checks, %d failed\n", rows.size(), failed);
    return failed == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Taylor coefficients of MLPs and the perturbative scattering-length pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    const char* env_root = std::getenv("NNPT_OUT_ROOT");
    std::string out_root = env_root && *env_root ? env_root : "nnpt_out";
    std::string config_path, preset_name = "desk";
    Overrides o;
    app.add_option("--out", out_root, "Output root (default $NNPT_OUT_ROOT or ./nnpt_out)");
    app.add_option("--config", config_path, "JSON config; flags override its keys")->check(CLI::ExistingFile);
    app.add_option("--preset", preset_name, "Base settings: desk or full")->check(CLI::IsMember({"desk", "full"}));
    app.add_option("--h0", o.h0, "Sampling points H0");
    app.add_option("--train", o.n_train, "Training samples");
    app.add_option("--test", o.n_test, "Test samples");
    app.add_option("--members1", o.members1, "Members of the first ensemble");
    app.add_option("--members2", o.members2, "Members of the second ensemble");
    app.add_option("--epochs", o.epochs, "Training epochs");
    app.add_option("--batch", o.batch, "Mini-batch size");
    app.add_option("--seed", o.seed, "Run seed");
    app.add_option("--threads", o.threads, "Worker threads");
    app.add_option("--scheme", o.scheme, "Oracle sampling: impulse or slab");
    app.add_option("--floor", o.floor, "MAPE target floor");
    app.add_option("--orders-removed", o.orders_removed, "Leading orders subtracted: 0, 1 or 2");
    app.add_option("--proxy-shapes", o.proxy_shapes, "Shapes in the proxy scan");
    app.add_option("--proxy-depths", o.proxy_depths, "Depths per shape in the proxy scan");
    app.add_option("--proxy-max-norm", o.proxy_max_norm, "Largest |U| in the proxy scan");

    int iteration = 1, order = 0, verify_nets = 30;
    std::uint64_t verify_seed = 1;
    std::string only = "both";
    auto* c_gen = app.add_subcommand("gen-data", "Generate iteration-0 train/test data");
    auto* c_train = app.add_subcommand("train", "Train the ensemble for an iteration");
    c_train->add_option("--iteration", iteration, "Iteration (1 or 2)");
    auto* c_taylor = app.add_subcommand("taylor", "Taylor coefficients of an ensemble at U = 0");
    c_taylor->add_option("--iteration", iteration, "Iteration (1 or 2)");
    c_taylor->add_option("--order", order, "Highest order (default: what later stages need)")->check(CLI::Range(1, 3));
    auto* c_sub = app.add_subcommand("subtract", "Residual targets for the next iteration");
    c_sub->add_option("--iteration", iteration, "Ensemble whose leading terms are removed");
    auto* c_fit = app.add_subcommand("fit", "Fit alpha and beta to the Born kernels");
    c_fit->add_option("--only", only, "alpha, beta or both")->check(CLI::IsMember({"alpha", "beta", "both"}));
    auto* c_proxy = app.add_subcommand("proxy", "Assemble the second-order proxy");
    auto* c_val = app.add_subcommand("validate", "Scan the proxy against the oracle and write the report");
    auto* c_verify = app.add_subcommand("verify", "Run the derivative and combinatorics self-checks");
    c_verify->add_option("--nets", verify_nets, "Random networks for the derivative check");
    c_verify->add_option("--verify-seed", verify_seed, "Seed for the random networks");
    auto* c_run = app.add_subcommand("run", "All stages in order");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_verify->parsed()) return verify(verify_nets, verify_seed);

        const PipelineConfig cfg = resolve(preset_name, config_path, o);
        const Layout L{out_root};
        fs::create_directories(L.root);
        write_json(L.config(), to_json(cfg));

        if (c_gen->parsed()) gen_data(cfg, L);
        if (c_train->parsed()) train(cfg, L, iteration);
        if (c_taylor->parsed()) taylor(cfg, L, iteration, order);
        if (c_sub->parsed()) subtract(cfg, L, iteration);
        if (c_fit->parsed()) fit(L, only);
        if (c_proxy->parsed()) proxy(cfg, L);
        if (c_val->parsed()) validate(cfg, L);
        if (c_run->parsed()) {
            gen_data(cfg, L);
            train(cfg, L, 1);
            taylor(cfg, L, 1, 0);
            subtract(cfg, L, 1);
            train(cfg, L, 2);
            taylor(cfg, L, 2, 0);
            fit(L, "both");
            proxy(cfg, L);
            validate(cfg, L);
        }
        return 0;
    } catch (const MissingArtifact& e) {
        std::fprintf(stderr, "nnpt: missing input artifact: %s\n", e.path().c_str());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "nnpt: %s\n", e.what());
        return 1;
    }
}
