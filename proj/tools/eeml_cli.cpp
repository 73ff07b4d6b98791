// Command-line front end: cost reporting, property verification, gradient
// checks, the prefill/decode benchmark, and demo generation.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eeml/checks.hpp"
#include "eeml/costmodel.hpp"
#include "eeml/inference.hpp"
#include "eeml/layers.hpp"

namespace {

int cmd_flops(std::uint64_t t, std::uint64_t v, std::uint64_t h, std::uint64_t d,
              const std::string& csv_path, const std::string& sweep) {
    std::vector<eeml::CostConfig> grid;
    if (!sweep.empty()) {
        // --sweep v=a,b,c : vary the visual token count, everything else fixed
        if (sweep.rfind("v=", 0) != 0)
            throw CLI::ValidationError("--sweep", "expected the form v=a,b,c");
        std::stringstream ss(sweep.substr(2));
        std::string item;
        while (std::getline(ss, item, ',')) {
            eeml::CostConfig c{t, std::stoull(item), h, d};
            grid.push_back(c);
        }
        if (grid.empty()) throw CLI::ValidationError("--sweep", "no values given");
    } else {
        grid.push_back(eeml::CostConfig{t, v, h, d});
    }

    if (!csv_path.empty() || grid.size() > 1) {
        const std::string csv = eeml::sweep_to_csv(grid);
        if (csv_path.empty()) {
            std::cout << csv;
        } else {
            std::ofstream out(csv_path);
            if (!out) throw std::runtime_error("cannot open " + csv_path);
            out << csv;
            std::cout << "wrote " << grid.size() << " row(s) to " << csv_path << "\n";
        }
        return 0;
    }
    std::cout << eeml::format_flops_report(eeml::build_flops_report(grid.front()));
    return 0;
}

eeml::Model demo_model(std::size_t hidden, std::size_t depth, std::size_t heads,
                       std::size_t vocab, std::size_t feat_dim, eeml::Mode mode,
                       std::uint64_t seed) {
    eeml::ModelConfig cfg;
    cfg.hidden_dim = hidden;
    cfg.depth = depth;
    cfg.heads = heads;
    cfg.vocab_size = vocab;
    cfg.feature_dim = feat_dim;
    cfg.mode = mode;
    return eeml::build_model(cfg, seed);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"composite-attention decoder testbed: cost model, verification, benchmark"};
    app.require_subcommand(1);
    app.set_config("--config", "", "line-oriented key = value file; flags override it");
    app.allow_config_extras(false);

    // flops
    std::uint64_t f_t = 256, f_v = 4900, f_h = 4096, f_d = 32;
    std::string f_csv, f_sweep;
    auto* flops_cmd = app.add_subcommand("flops", "analytic FLOPs report and sweeps");
    flops_cmd->add_option("--t", f_t, "text token count")->check(CLI::PositiveNumber);
    flops_cmd->add_option("--v", f_v, "visual token count")->check(CLI::NonNegativeNumber);
    flops_cmd->add_option("--hidden", f_h, "hidden dimension")->check(CLI::PositiveNumber);
    flops_cmd->add_option("--layers", f_d, "decoder layer count")->check(CLI::PositiveNumber);
    flops_cmd->add_option("--csv", f_csv, "write CSV to this path instead of a text report");
    flops_cmd->add_option("--sweep", f_sweep, "vary the visual count, e.g. v=576,2890,4900");

    // verify
    std::uint64_t v_seed = 0;
    int v_trials = 100;
    auto* verify_cmd = app.add_subcommand("verify", "run the property and oracle suites");
    verify_cmd->add_option("--seed", v_seed, "base seed (printed; failures are replayable)");
    verify_cmd->add_option("--trials", v_trials, "trials per randomized check")
        ->check(CLI::PositiveNumber);

    // gradcheck
    std::uint64_t g_seed = 0;
    double g_eps = 1e-5;
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    grad_cmd->add_option("--seed", g_seed, "base seed");
    grad_cmd->add_option("--eps", g_eps, "central-difference step")->check(CLI::PositiveNumber);

    // bench
    std::uint64_t b_v = 4096, b_t = 32, b_h = 256, b_d = 4, b_seed = 0;
    std::size_t b_heads = 4, b_vocab = 256, b_feat = 64, b_repeats = 5;
    std::vector<std::size_t> b_gens = {2, 8, 32, 128};
    auto* bench_cmd = app.add_subcommand("bench", "wall-clock prefill/decode benchmark");
    bench_cmd->add_option("--v", b_v, "visual token count")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--t", b_t, "prompt token count")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--hidden", b_h, "hidden dimension")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--layers", b_d, "decoder layer count")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--gen", b_gens, "generation lengths")->delimiter(',');
    bench_cmd->add_option("--repeats", b_repeats, "timed repeats (median taken)")
        ->check(CLI::Range(std::size_t{3}, std::size_t{1000}));
    bench_cmd->add_option("--heads", b_heads, "attention heads")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--vocab", b_vocab, "vocab size")->check(CLI::Range(2, 1 << 20));
    bench_cmd->add_option("--feat-dim", b_feat, "raw visual feature width")
        ->check(CLI::PositiveNumber);
    bench_cmd->add_option("--seed", b_seed, "seed for weights, features and prompt");

    // generate
    std::string gen_weights, gen_features, gen_mode_str;
    std::vector<int> gen_prompt;
    std::size_t gen_max_new = 8;
    std::uint64_t gen_seed = 0;
    std::size_t gen_hidden = 32, gen_depth = 2, gen_heads = 2, gen_vocab = 64, gen_feat = 16;
    auto* gen_cmd = app.add_subcommand("generate", "greedy decoding demo over the file formats");
    gen_cmd->add_option("--weights", gen_weights, "weight file (omit for a random seeded model)");
    gen_cmd->add_option("--features", gen_features, "visual feature file (omit for text-only)");
    gen_cmd->add_option("--prompt-ids", gen_prompt, "prompt token ids")
        ->delimiter(',')
        ->required();
    gen_cmd->add_option("--max-new", gen_max_new, "tokens to generate")
        ->check(CLI::PositiveNumber)
        ->required();
    gen_cmd->add_option("--mode", gen_mode_str, "baseline|composite (overrides the weight file)")
        ->check(CLI::IsMember({"baseline", "composite"}));
    gen_cmd->add_option("--seed", gen_seed, "seed for the demo model");
    gen_cmd->add_option("--hidden", gen_hidden, "demo hidden dim")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--layers", gen_depth, "demo layer count")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--heads", gen_heads, "demo heads")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--vocab", gen_vocab, "demo vocab size")->check(CLI::Range(2, 1 << 20));
    gen_cmd->add_option("--feat-dim", gen_feat, "demo feature width")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (flops_cmd->parsed()) {
            std::cout << "flops: seed=0 (deterministic, no randomness)\n";
            return cmd_flops(f_t, f_v, f_h, f_d, f_csv, f_sweep);
        }

        if (verify_cmd->parsed())
            return eeml::checks::run_verify(std::cout, v_seed, v_trials) == 0 ? 0 : 1;

        if (grad_cmd->parsed())
            return eeml::checks::run_gradcheck(std::cout, g_seed, g_eps) == 0 ? 0 : 1;

        if (bench_cmd->parsed()) {
            std::cout << "bench: seed=" << b_seed << " V=" << b_v << " T=" << b_t
                      << " h=" << b_h << " d=" << b_d << " repeats=" << b_repeats << "\n";
            const eeml::Model baseline =
                demo_model(b_h, b_d, b_heads, b_vocab, b_feat, eeml::Mode::baseline, b_seed);
            eeml::Model composite = baseline;
            composite.config.mode = eeml::Mode::composite;
            const eeml::BenchTable table = eeml::bench_prefill_decode(
                baseline, composite, b_v, b_t, b_gens, b_repeats, b_seed);
            std::cout << eeml::bench_to_csv(table);
            std::cout << "\nspeed ratio (composite tok/s over baseline tok/s):\n";
            std::cout << "gen,ratio\n";
            for (std::size_t g : b_gens) {
                const double ratio = table.find(eeml::Mode::composite, g).tokens_per_second /
                                     table.find(eeml::Mode::baseline, g).tokens_per_second;
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%zu,%.3f\n", g, ratio);
                std::cout << buf;
            }
            return 0;
        }

        if (gen_cmd->parsed()) {
            std::cout << "generate: seed=" << gen_seed << "\n";
            eeml::Model model;
            if (!gen_weights.empty()) {
                model = eeml::load_model(gen_weights);
            } else {
                const eeml::Mode mode = gen_mode_str == "baseline" ? eeml::Mode::baseline
                                                                   : eeml::Mode::composite;
                model = demo_model(gen_hidden, gen_depth, gen_heads, gen_vocab, gen_feat, mode,
                                   gen_seed);
                std::cout << "no weight file given; built a random seeded demo model\n";
            }
            if (!gen_mode_str.empty())
                model.config.mode = gen_mode_str == "baseline" ? eeml::Mode::baseline
                                                               : eeml::Mode::composite;
            eeml::Matrix features(0, model.config.feature_dim);
            if (!gen_features.empty()) features = eeml::load_features(gen_features);

            const std::vector<int> ids =
                eeml::generate_greedy(model, features, gen_prompt, gen_max_new);
            std::cout << "mode=" << eeml::mode_name(model.config.mode)
                      << " visual_tokens=" << features.rows()
                      << " prompt_len=" << gen_prompt.size() << "\n";
            std::cout << "generated:";
            for (int id : ids) std::cout << ' ' << id;
            std::cout << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
