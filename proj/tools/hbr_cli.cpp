// Command-line front end. Exit codes: 0 for stable/valid/advisory results,
// 1 for unstable/violated/invalid results and numerical failures, 2 for
// configuration and usage errors.

#include "hbr/campaign.hpp"
#include "hbr/errors.hpp"
#include "hbr/function_spaces.hpp"
#include "hbr/riesz.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

using hbr::ConfigError;

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string format = "json";
    std::optional<int> refine;
};

nlohmann::json read_json(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw ConfigError(std::string("cannot open ") + what + " file '" + path + "'");
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string(what) + " file '" + path + "' is not valid JSON: " + e.what());
    }
}

/// Full grid JSON ({"axes": [...]}) or {"box": [[a, b], ...], "nodes": n,
/// "spacing": "uniform" | "logarithmic"}.
hbr::Grid load_grid(const std::string& path) {
    const auto j = read_json(path, "grid");
    try {
        if (j.contains("axes")) return hbr::Grid::from_json(j);
        std::vector<std::pair<double, double>> box;
        for (const auto& b : j.at("box")) box.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
        const auto n = j.at("nodes").get<std::size_t>();
        const auto sp = hbr::parse_spacing(j.value("spacing", "uniform"));
        return sp == hbr::Spacing::uniform ? hbr::Grid::uniform(box, n) : hbr::Grid::logarithmic(box, n);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("grid file '" + path + "': " + e.what());
    }
}

hbr::GridFunction load_function(const hbr::Grid& g, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open input file '" + path + "'");
    return hbr::GridFunction::read_csv(in, g);
}

/// Writes text to <out>/<name> when --out is set, else to stdout.
void emit(const Globals& g, const std::string& name, const std::string& text) {
    if (g.out.empty()) {
        std::cout << text;
        return;
    }
    std::filesystem::create_directories(g.out);
    const auto path = std::filesystem::path(g.out) / name;
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write '" + path.string() + "'");
    f << text;
    std::cerr << "wrote " << path.string() << "\n";
}

void emit_json(const Globals& g, const std::string& name, const nlohmann::json& j) { emit(g, name, j.dump(2) + "\n"); }

std::string require_config(const Globals& g) {
    if (g.config.empty()) throw ConfigError("this command needs --config <path.json>");
    return g.config;
}

int exit_for(hbr::Verdict v) {
    return v == hbr::Verdict::stable || v == hbr::Verdict::advisory ? 0 : 1;
}

int run_campaign_command(const Globals& g, const std::vector<std::string>& allowed) {
    auto cfg_json = read_json(require_config(g), "config");
    if (g.seed) cfg_json["seed"] = *g.seed;
    if (g.refine) cfg_json["refinement_levels"] = *g.refine;
    const auto cfg = hbr::CampaignConfig::from_json(cfg_json);
    if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), cfg.id) == allowed.end())
        throw ConfigError("inequality '" + cfg.id + "' is not handled by this command");
    const auto rep = hbr::run_campaign(cfg);
    if (g.format == "csv") {
        std::ostringstream os;
        rep.write_csv(os);
        emit(g, cfg.id + ".csv", os.str());
        std::cerr << cfg.id << ": " << hbr::to_string(rep.verdict) << "\n";
    } else {
        emit_json(g, cfg.id + ".json", rep.to_json());
    }
    return exit_for(rep.verdict);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bessel-operator heat kernels, Riesz transforms and Hardy/BMO checks"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "JSON config or input file");
    app.add_option("--seed", g.seed, "RNG seed overriding the config");
    app.add_option("--out", g.out, "Directory for output files (default: stdout)");
    app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
    app.add_option("--refine", g.refine, "Refinement levels overriding the config");

    std::function<int()> action;

    // kernel
    auto* kernel = app.add_subcommand("kernel", "Heat kernel and its delta-derivatives");
    kernel->require_subcommand(1);
    std::vector<double> nu{0.5};
    std::vector<int> korder;
    double t = 1.0;
    std::vector<double> x{1.0}, y{1.0};
    auto* keval = kernel->add_subcommand("eval", "prod_j delta_{nu_j}^{k_j} p_t^{nu_j}(x_j, y_j)");
    keval->add_option("--nu", nu, "Orders nu_j")->required();
    keval->add_option("--k", korder, "delta orders (default 0)");
    keval->add_option("--t", t)->required();
    keval->add_option("--x", x)->required();
    keval->add_option("--y", y)->required();
    keval->callback([&] {
        action = [&] {
            if (korder.empty()) korder.assign(nu.size(), 0);
            const auto v = hbr::log_delta_heat_kernel_nd(hbr::NuVector(nu), korder, hbr::KernelPoint(t, x, y));
            emit_json(g, "kernel.json", {{"value", v.value()}, {"log_abs", v.log_abs}, {"sign", v.sign}});
            return 0;
        };
    });
    auto* kverify = kernel->add_subcommand("verify", "Run a Gaussian-bound campaign from --config");
    kverify->callback([&] {
        action = [&] {
            return run_campaign_command(g, {"thm2_1", "thm2_4", "thm2_5", "cor2_6a", "cor2_6b", "prop2_7", "prop2_9",
                                            "prop2_10", "cor2_11"});
        };
    });

    // riesz
    auto* riesz = app.add_subcommand("riesz", "Higher-order Riesz transforms");
    riesz->require_subcommand(1);
    std::string grid_path, input_path;
    auto* rkernel = riesz->add_subcommand("kernel", "Point value of the Riesz kernel");
    rkernel->add_option("--nu", nu)->required();
    rkernel->add_option("--k", korder)->required();
    rkernel->add_option("--x", x)->required();
    rkernel->add_option("--y", y)->required();
    rkernel->callback([&] {
        action = [&] {
            const auto e = hbr::riesz_kernel_estimate(hbr::NuVector(nu), hbr::MultiIndex(korder), x, y, {});
            emit_json(g, "riesz_kernel.json",
                      {{"value", e.value}, {"tail_error", e.tail_error}, {"warning", e.warning}});
            return 0;
        };
    });
    auto* rapply = riesz->add_subcommand("apply", "Apply the transform to a grid function (CSV out)");
    rapply->add_option("--nu", nu)->required();
    rapply->add_option("--k", korder)->required();
    rapply->add_option("--grid", grid_path, "Grid JSON")->required();
    rapply->add_option("--input", input_path, "Function CSV (x1..xn,value)")->required();
    rapply->callback([&] {
        action = [&] {
            const auto grid = load_grid(grid_path);
            const auto f = load_function(grid, input_path);
            hbr::ApplyDiagnostics diag;
            const auto r = hbr::riesz_apply(hbr::NuVector(nu), hbr::MultiIndex(korder), f, {}, &diag);
            std::ostringstream os;
            r.write_csv(os);
            emit(g, "riesz_apply.csv", os.str());
            std::cerr << "t_head " << diag.t_head << ", t_last " << diag.t_last << ", tail " << diag.tail << "\n";
            return 0;
        };
    });
    auto* rverify = riesz->add_subcommand("verify", "Run a Riesz-kernel or operator campaign from --config");
    rverify->callback([&] {
        action = [&] {
            return run_campaign_command(g, {"prop2_8", "thm1_5_size", "thm1_5_smooth", "thm1_6i", "thm1_6ii", "thm4_1"});
        };
    });

    // atoms
    auto* atoms = app.add_subcommand("atoms", "Atom validation and decomposition");
    atoms->require_subcommand(1);
    auto* acheck = atoms->add_subcommand("check", "Validate the atom stored in --config");
    acheck->callback([&] {
        action = [&] {
            const auto a = hbr::AtomFixture::load(require_config(g));
            if (a.kind == "p_rho" && (!a.ball || !a.nu)) throw ConfigError("p_rho atoms need ball and nu");
            const auto j = hbr::check_atom(a);
            emit_json(g, "atom_check.json", j);
            return j.at("valid").get<bool>() ? 0 : 1;
        };
    });
    auto* adecomp = atoms->add_subcommand("decompose", "Dual-basis decomposition of the atom in --config");
    adecomp->callback([&] {
        action = [&] {
            const auto a = hbr::AtomFixture::load(require_config(g));
            if (!a.ball) throw ConfigError("decomposition needs a ball");
            const auto d = hbr::atom_dual_decompose({a.f, *a.ball, a.p});
            emit_json(g, "decomposition.json", d.certificates());
            return 0;
        };
    });

    // bmo
    auto* bmo = app.add_subcommand("bmo", "BMO estimates");
    bmo->require_subcommand(1);
    double s = 0.0;
    int M = 0;
    auto* bnorm = bmo->add_subcommand("norm", "Sampled BMO^{s,M} norm of a grid function");
    bnorm->add_option("--grid", grid_path)->required();
    bnorm->add_option("--input", input_path)->required();
    bnorm->add_option("--s", s);
    bnorm->add_option("--M", M);
    bnorm->callback([&] {
        action = [&] {
            const auto grid = load_grid(grid_path);
            const auto f = load_function(grid, input_path);
            emit_json(g, "bmo.json", hbr::bmo_estimate(f, s, M, {}).to_json());
            return 0;
        };
    });

    // cover
    auto* cover = app.add_subcommand("cover", "Critical-radius coverings");
    cover->require_subcommand(1);
    std::vector<double> box{0.5, 8.0};
    std::size_t nodes = 200;
    auto* cbuild = cover->add_subcommand("build", "Vitali covering of a box");
    cbuild->add_option("--box", box, "lo1 hi1 [lo2 hi2 ...]");
    cbuild->add_option("--nodes", nodes, "Grid nodes per axis");
    cbuild->callback([&] {
        action = [&] {
            if (box.empty() || box.size() % 2) throw ConfigError("--box needs lo/hi pairs");
            std::vector<std::pair<double, double>> b;
            for (std::size_t i = 0; i < box.size(); i += 2) b.emplace_back(box[i], box[i + 1]);
            const auto c = hbr::vitali_covering(b, hbr::Grid::uniform(b, nodes));
            emit_json(g, "covering.json", c.to_json());
            return c.covers_box() && c.fifth_balls_disjoint() ? 0 : 1;
        };
    });

    // campaign
    auto* campaign = app.add_subcommand("campaign", "Verification campaigns");
    campaign->require_subcommand(1);
    auto* crun = campaign->add_subcommand("run", "Run the campaign in --config");
    crun->callback([&] { action = [&] { return run_campaign_command(g, {}); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    try {
        return action ? action() : 2;
    } catch (const hbr::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const hbr::DomainError& e) {
        std::cerr << "invalid argument: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
