// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit code is the number of
// failed criteria. `--only K` restricts the run to a single criterion.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include "traitmix/assessment.hpp"
#include "traitmix/eval.hpp"
#include "traitmix/gradcheck.hpp"
#include "traitmix/pipeline.hpp"
#include "traitmix/trainer.hpp"

using namespace traitmix;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<double> random_vec(Rng& rng, size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

// ---------------------------------------------------------------------------
// shared trained state for criteria 5 and 6

struct PairedRuns {
    struct SeedResult {
        double offdiag_psl = 0.0;
        double offdiag_none = 0.0;
        size_t eval_wins = 0;
        bool top1_distinct = false;
        bool top1_applicable = false;
        double pair_seconds = 0.0;
    };
    std::vector<SeedResult> seeds;
};

ModelConfig paired_model_config() {
    ModelConfig mc;
    mc.n_layers = 2;
    mc.d_model = 64;
    mc.n_heads = 4;
    mc.ffn_mult = 4;
    mc.context_len = 256;
    mc.adapter.num_experts = 8;
    mc.adapter.total_rank = 64;
    mc.adapter.alpha = 64.0;
    mc.adapter.personality_dim = 16;
    return mc;
}

TrainConfig paired_train_config(uint64_t seed) {
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 16;
    tc.learning_rate = 5e-3;
    tc.max_input_len = 96;
    tc.lambda = 0.1;
    tc.seed = seed;
    return tc;
}

double mean_offdiag_gram(ToyLm& model) {
    auto layers = export_router_weights(model);
    double acc = 0.0;
    for (const auto& layer : layers) acc += layer.gram_offdiag_mean;
    return acc / static_cast<double>(layers.size());
}

bool top1_distinct(ToyLm& model) {
    // distinct across every router layer
    for (const auto& layer : export_router_weights(model)) {
        std::vector<size_t> top;
        for (const auto& row : layer.rows) {
            size_t best = 0;
            for (size_t e = 1; e < row.size(); ++e)
                if (row[e] > row[best]) best = e;
            top.push_back(best);
        }
        std::sort(top.begin(), top.end());
        if (std::adjacent_find(top.begin(), top.end()) != top.end()) return false;
    }
    return true;
}

const PairedRuns& paired_runs() {
    static const PairedRuns runs = [] {
        PairedRuns out;
        for (uint64_t seed = 1; seed <= 3; ++seed) {
            const auto t0 = Clock::now();
            auto corpus = synth_corpus(StyleSpec::synthetic_default(), 200, 1000 + seed); // 2000 dialogues
            SplitResult split_result = split(corpus, 0.1, seed);

            TrainConfig tc = paired_train_config(seed);
            PairedRuns::SeedResult result;

            ToyLm model_psl(paired_model_config(), seed);
            tc.mode = RegularizerMode::psl;
            train(tc, split_result.train, model_psl);
            result.offdiag_psl = mean_offdiag_gram(model_psl);
            result.top1_applicable =
                model_psl.personality_table().trait_count() <= paired_model_config().adapter.num_experts;
            result.top1_distinct = result.top1_applicable && top1_distinct(model_psl);

            EvalLmResult ev = eval_lm_matrix(model_psl, split_result.eval, 8, tc.max_input_len);
            result.eval_wins = ev.win_count;

            ToyLm model_none(paired_model_config(), seed);
            tc.mode = RegularizerMode::none;
            train(tc, split_result.train, model_none);
            result.offdiag_none = mean_offdiag_gram(model_none);

            result.pair_seconds = seconds_since(t0);
            out.seeds.push_back(result);
            std::cout << "  [paired seed " << seed << "] offdiag psl=" << result.offdiag_psl
                      << " none=" << result.offdiag_none << " eval wins=" << result.eval_wins << "/10"
                      << " pair time=" << result.pair_seconds << "s\n";
        }
        return out;
    }();
    return runs;
}

// ---------------------------------------------------------------------------
// criterion 1: gradient correctness

bool criterion_gradients(std::ostream& log) {
    const auto t0 = Clock::now();
    double worst = 0.0;

    for (uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(mix_seed(0xacce97, seed));
        // (a) single-expert adapter forward
        {
            const size_t d_in = 3 + rng.below(4), d_out = 3 + rng.below(4);
            const size_t rank = 1 + rng.below(3);
            auto weight = random_vec(rng, d_out * d_in);
            auto h = random_vec(rng, d_in);
            auto proj = random_vec(rng, d_out);
            std::vector<ParamSpec> theta = {{{rank, d_in}, random_vec(rng, rank * d_in)},
                                            {{d_out, rank}, random_vec(rng, d_out * rank)}};
            auto build = [&](Tape& tp, const std::vector<Tensor>& l) {
                Tensor x = tp.constant({1, d_in}, h);
                Tensor base = matmul(x, transpose(tp.constant({d_out, d_in}, weight)));
                Tensor delta = matmul(matmul(x, transpose(l[0])), transpose(l[1]));
                Tensor out = add(base, scale(delta, 2.0 / static_cast<double>(rank)));
                return sum(mul(out, tp.constant({1, d_out}, proj)));
            };
            worst = std::max(worst, finite_diff_check(build, theta, 1e-5));
        }
        // (b) mixture forward including the mixing weights
        {
            const size_t d_in = 4, d_out = 4, n = 2 + 2 * rng.below(2), rank = 2;
            auto weight = random_vec(rng, d_out * d_in);
            auto h = random_vec(rng, d_in);
            auto proj = random_vec(rng, d_out);
            std::vector<ParamSpec> theta;
            for (size_t j = 0; j < n; ++j) {
                theta.push_back({{rank, d_in}, random_vec(rng, rank * d_in)});
                theta.push_back({{d_out, rank}, random_vec(rng, d_out * rank)});
            }
            theta.push_back({{n}, random_vec(rng, n)});
            const double scaling = 1.5 / static_cast<double>(n * rank);
            auto build = [&, n](Tape& tp, const std::vector<Tensor>& l) {
                Tensor x = tp.constant({1, d_in}, h);
                Tensor base = matmul(x, transpose(tp.constant({d_out, d_in}, weight)));
                Tensor omega = softmax_rows(l[2 * n]);
                Tensor mix;
                for (size_t j = 0; j < n; ++j) {
                    Tensor delta = matmul(matmul(x, transpose(l[2 * j])), transpose(l[2 * j + 1]));
                    Tensor c = scale_by(delta, pick(omega, j));
                    mix = j == 0 ? c : add(mix, c);
                }
                return sum(mul(add(base, scale(mix, scaling)), tp.constant({1, d_out}, proj)));
            };
            worst = std::max(worst, finite_diff_check(build, theta, 1e-5));
        }
        // (c) routing softmax w.r.t. table and gate
        {
            const size_t d_p = 4, n = 4, traits = 10;
            std::vector<ParamSpec> theta = {{{traits, d_p}, random_vec(rng, traits * d_p)},
                                            {{d_p, n}, random_vec(rng, d_p * n)}};
            auto proj = random_vec(rng, n * traits);
            auto build = [&](Tape& tp, const std::vector<Tensor>& l) {
                std::vector<Tensor> cols;
                for (size_t i = 0; i < traits; ++i)
                    cols.push_back(reshape(softmax_rows(matmul(slice_rows(l[0], i, i + 1), l[1])), {n}));
                return sum(mul(stack_cols(cols), tp.constant({n, traits}, proj)));
            };
            worst = std::max(worst, finite_diff_check(build, theta, 1e-5));
        }
        // (d) specialization loss through the routing graph
        {
            const size_t d_p = 4, n = 4, traits = 6;
            std::vector<ParamSpec> theta = {{{traits, d_p}, random_vec(rng, traits * d_p)},
                                            {{d_p, n}, random_vec(rng, d_p * n)}};
            auto build = [&](Tape& tp, const std::vector<Tensor>& l) {
                std::vector<Tensor> cols;
                for (size_t i = 0; i < traits; ++i)
                    cols.push_back(reshape(softmax_rows(matmul(slice_rows(l[0], i, i + 1), l[1])), {n}));
                return specialization_loss(stack_cols(cols));
            };
            worst = std::max(worst, finite_diff_check(build, theta, 1e-5));
        }
    }

    // (e) full combined objective through a 1-layer model, all trainable
    // parameters, hand-rolled central differences
    double worst_model = 0.0;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        ModelConfig mc;
        mc.n_layers = 1;
        mc.d_model = 16;
        mc.n_heads = 2;
        mc.ffn_mult = 2;
        mc.context_len = 64;
        mc.adapter.num_experts = 2;
        mc.adapter.total_rank = 4;
        mc.adapter.alpha = 4.0;
        mc.adapter.personality_dim = 4;
        ToyLm model(mc, seed);
        Rng jitter(mix_seed(0xe2e, seed));
        for (Param* p : model.trainable_params())
            for (double& v : p->value) v += jitter.normal(0.0, 0.05);

        DialogueRecord rec{TraitId::from_index(seed % kTraitCount),
                           "t",
                           {{Speaker::questioner, "ab"}, {Speaker::discloser, "cde fg"}}};
        const double lambda = 0.1;
        auto build_objective = [&](Tape& tape, ParamBinding& bind) {
            Tensor lm = dialogue_lm_loss(tape, bind, model, rec, rec.trait, 64);
            std::vector<Tensor> regs;
            for (size_t r = 0; r < model.router_count(); ++r)
                regs.push_back(specialization_loss(weighting_matrix(bind, model.personality_table(), model.router(r))));
            return total_loss(lm, regs, lambda, RegularizerMode::psl);
        };
        auto eval_total = [&]() {
            Tape tape;
            ParamBinding bind(tape);
            return build_objective(tape, bind).breakdown.total;
        };

        {
            Tape tape;
            ParamBinding bind(tape);
            TotalLoss tl = build_objective(tape, bind);
            tape.backward(tl.total);
            for (Param* p : model.trainable_params()) p->zero_grad();
            bind.accumulate_grads();
        }
        const double eps = 1e-5;
        for (Param* p : model.trainable_params()) {
            for (size_t c = 0; c < p->size(); ++c) {
                const double orig = p->value[c];
                p->value[c] = orig + eps;
                const double plus = eval_total();
                p->value[c] = orig - eps;
                const double minus = eval_total();
                p->value[c] = orig;
                const double fd = (plus - minus) / (2.0 * eps);
                const double rel = std::fabs(p->grad[c] - fd) / std::max(1.0, std::fabs(p->grad[c]));
                worst_model = std::max(worst_model, rel);
            }
        }
    }

    const double elapsed = seconds_since(t0);
    log << "max rel err: composed ops " << worst << ", full model " << worst_model << "; " << elapsed << "s";
    return worst <= 1e-4 && worst_model <= 1e-4 && elapsed < 120.0;
}

// ---------------------------------------------------------------------------
// criterion 2: analytic specialization-loss cases

bool criterion_psl_exact(std::ostream& log) {
    Tape tape;
    Tensor onehot = tape.constant({4, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0});
    const double zero_case = specialization_loss(onehot).scalar();

    Tensor half = tape.constant({2, 2}, {0.5, 0.5, 0.5, 0.5});
    const double half_case = specialization_loss(half).scalar();

    Rng rng(31337);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> m(4 * 3);
        for (size_t c = 0; c < 3; ++c) {
            double total = 0.0;
            for (size_t e = 0; e < 4; ++e) {
                m[e * 3 + c] = rng.uniform(0.0, 1.0);
                total += m[e * 3 + c];
            }
            for (size_t e = 0; e < 4; ++e) m[e * 3 + c] /= total;
        }
        double oracle = 0.0;
        for (size_t i = 0; i < 3; ++i)
            for (size_t j = 0; j < 3; ++j) {
                if (i == j) continue;
                double dot = 0.0;
                for (size_t e = 0; e < 4; ++e) dot += m[e * 3 + i] * m[e * 3 + j];
                oracle += std::fabs(dot);
            }
        Tape t2;
        worst = std::max(worst, std::fabs(specialization_loss(t2.constant({4, 3}, m)).scalar() - oracle));
    }
    log << "one-hot " << zero_case << ", half-half " << half_case << ", gram oracle max err " << worst;
    return std::fabs(zero_case) <= 1e-12 && std::fabs(half_case - 1.0) <= 1e-12 && worst <= 1e-12;
}

// ---------------------------------------------------------------------------
// criterion 3: parameter parity

bool criterion_parity(std::ostream& log) {
    ModelConfig mc; // default toy layer set: 2 layers x {q,k,v,ffn_in,ffn_out} at d=64
    ToyLm model(mc, 1);
    const auto dims = model.adapted_layer_dims();
    AdapterConfig cfg = mc.adapter;
    cfg.total_rank = 32;
    std::vector<size_t> counts;
    for (size_t n : {1, 2, 4, 8, 16}) {
        cfg.num_experts = n;
        counts.push_back(trainable_param_count(cfg, dims));
    }
    log << "counts over N in {1,2,4,8,16}: ";
    for (size_t c : counts) log << c << " ";
    for (size_t c : counts)
        if (c != counts.front()) return false;
    return true;
}

// ---------------------------------------------------------------------------
// criterion 4: published-row aggregation arithmetic

bool criterion_aggregation(std::ostream& log) {
    auto row = [](std::array<double, kTraitCount> cells) {
        std::array<std::vector<double>, kTraitCount> runs;
        for (size_t i = 0; i < kTraitCount; ++i) runs[i] = {cells[i]};
        return aggregate(runs);
    };
    AggregateReport a = row({4.18, 4.88, 4.00, 4.58, 4.74, 3.32, 2.57, 1.24, 2.85, 4.39});
    AggregateReport b = row({5.00, 5.00, 5.00, 4.75, 4.97, 1.10, 1.21, 1.06, 1.70, 1.06});
    log << "row1 " << a.avg_high << "/" << a.avg_low << "/" << a.overall << "; row2 " << b.avg_high << "/"
        << b.avg_low << "/" << b.overall;
    return std::fabs(a.avg_high - 4.48) <= 0.005 && std::fabs(a.avg_low - 2.87) <= 0.005 &&
           std::fabs(a.overall - 1.60) <= 0.005 && std::fabs(b.avg_high - 4.94) <= 0.005 &&
           std::fabs(b.avg_low - 1.23) <= 0.005 && std::fabs(b.overall - 3.72) <= 0.005;
}

// ---------------------------------------------------------------------------
// criterion 5: specialization effect of the PSL

bool criterion_specialization(std::ostream& log) {
    const PairedRuns& runs = paired_runs();
    bool ratio_ok = true, time_ok = true;
    size_t distinct_count = 0;
    bool applicable = false;
    for (const auto& s : runs.seeds) {
        ratio_ok = ratio_ok && (s.offdiag_psl <= 0.5 * s.offdiag_none);
        time_ok = time_ok && (s.pair_seconds < 15.0 * 60.0);
        applicable = applicable || s.top1_applicable;
        distinct_count += s.top1_distinct ? 1 : 0;
    }
    log << "offdiag ratios:";
    for (const auto& s : runs.seeds) log << " " << s.offdiag_psl / s.offdiag_none;
    if (applicable)
        log << "; distinct top-1 in " << distinct_count << "/3 seeds";
    else
        log << "; top-1 distinctness n/a (trait count 10 > 8 experts)";
    const bool distinct_ok = !applicable || distinct_count >= 2;
    return ratio_ok && time_ok && distinct_ok;
}

// ---------------------------------------------------------------------------
// criterion 6: trait conditioning on held-out text

bool criterion_conditioning(std::ostream& log) {
    const PairedRuns& runs = paired_runs();
    size_t majority = 0;
    log << "held-out matching wins per seed:";
    for (const auto& s : runs.seeds) {
        log << " " << s.eval_wins << "/10";
        if (s.eval_wins >= 8) ++majority;
    }
    return majority >= 2;
}

// ---------------------------------------------------------------------------
// criterion 7: frozen base across every regime

bool criterion_frozen_base(std::ostream& log) {
    auto corpus = synth_corpus(StyleSpec::synthetic_default(), 10, 777); // 100 dialogues
    struct Case {
        AdapterRegime regime;
        RegularizerMode mode;
        const char* name;
    };
    const std::vector<Case> cases = {{AdapterRegime::moe, RegularizerMode::psl, "moe+psl"},
                                     {AdapterRegime::moe, RegularizerMode::aux, "moe+aux"},
                                     {AdapterRegime::single_lora, RegularizerMode::none, "single_lora"},
                                     {AdapterRegime::per_trait_lora, RegularizerMode::none, "per_trait_lora"}};
    for (const Case& c : cases) {
        ModelConfig mc = paired_model_config();
        mc.regime = c.regime;
        if (c.regime != AdapterRegime::moe) mc.adapter.num_experts = 1;
        ToyLm model(mc, 42);
        const uint64_t before = model.base_checksum();
        TrainConfig tc = paired_train_config(9);
        tc.epochs = 1;
        tc.mode = c.mode;
        tc.clip_gradients = c.mode == RegularizerMode::aux;
        train(tc, corpus, model);
        const uint64_t after = model.base_checksum();
        log << c.name << (before == after ? " ok; " : " CHANGED; ");
        if (before != after) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// criterion 8: psl independence of batch content

bool criterion_psl_batch_independence(std::ostream& log) {
    auto corpus = synth_corpus(StyleSpec::synthetic_default(), 4, 888); // 40 records -> 3 batches
    ModelConfig mc = paired_model_config();
    ToyLm model(mc, 5);
    TrainConfig tc = paired_train_config(3);
    tc.epochs = 1;
    tc.batch_size = 16;
    tc.learning_rate = 1e-300; // parameters numerically frozen between steps
    RunReport report = train(tc, corpus, model);
    double max_diff = 0.0;
    for (size_t i = 1; i < report.steps.size(); ++i)
        max_diff = std::max(max_diff,
                            std::fabs(report.steps[i].losses.psl.value() - report.steps[0].losses.psl.value()));
    const bool lm_varies = report.steps[0].losses.lm != report.steps[1].losses.lm;
    log << "logged psl max diff " << max_diff << " across " << report.steps.size()
        << " distinct batches (lm varies: " << (lm_varies ? "yes" : "no") << ")";
    return max_diff <= 1e-12 && lm_varies;
}

// ---------------------------------------------------------------------------
// criterion 9: pipeline determinism and pass-rate arithmetic

bool criterion_pipeline(std::ostream& log) {
    auto make_scripted = [](const fs::path& dir, MockChatClient& mock, PipelineConfig& cfg, size_t quota) {
        cfg.quota_per_trait = quota;
        cfg.output_path = (dir / "dataset.jsonl").string();
        cfg.parallelism = 4;
        for (const TraitId& trait : TraitId::all()) {
            auto& list = cfg.seed_sentences[trait.code()];
            for (size_t s = 0; s < quota; ++s) {
                const std::string sentence = "seed " + trait.code() + " #" + std::to_string(s);
                list.push_back(sentence);
                mock.script(seed_topic_system_prompt(trait.dimension), sentence,
                            std::string("facet-") + level_word(trait.level));
                std::string text;
                for (int p = 0; p < 3; ++p) {
                    text += "Character1: q" + std::to_string(p) + "?\n";
                    text += "Character2: reply " + std::to_string(p) + " " + trait.code() + std::to_string(s) + "\n";
                }
                mock.script(synthesis_system_prompt(trait), synthesis_user_prompt(trait, sentence), text);
                DialogueRecord rec = parse_dialogue_text(text, trait, sentence);
                mock.script(validation_system_prompt(), validation_user_prompt(render_dialogue(rec)),
                            std::string("Reason: scripted\nResult: ") + dimension_name(trait.dimension));
            }
        }
    };
    auto read_file = [](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    };

    const fs::path base = fs::temp_directory_path() / ("traitmix-acc9-" + std::to_string(::getpid()));
    fs::remove_all(base);
    fs::create_directories(base / "a");
    fs::create_directories(base / "b");

    MockChatClient mock_a;
    PipelineConfig cfg_a;
    make_scripted(base / "a", mock_a, cfg_a, 5);
    PipelineResult ra = run_pipeline(cfg_a, mock_a);

    MockChatClient mock_b;
    PipelineConfig cfg_b;
    make_scripted(base / "b", mock_b, cfg_b, 5);
    PipelineResult rb = run_pipeline(cfg_b, mock_b);

    const bool dataset_identical = read_file(cfg_a.output_path) == read_file(cfg_b.output_path);
    const bool report_identical = ra.report.to_json().dump() == rb.report.to_json().dump();

    // 1000 validations with 28 scripted failures -> 97.2%
    fs::create_directories(base / "c");
    MockChatClient mock_c;
    PipelineConfig cfg_c;
    make_scripted(base / "c", mock_c, cfg_c, 100);
    // overwrite validation scripts: fail dialogues whose counter hits every 36th
    size_t counter = 0, failures = 0;
    for (const TraitId& trait : TraitId::all()) {
        for (size_t s = 0; s < 100; ++s) {
            const std::string sentence = "seed " + trait.code() + " #" + std::to_string(s);
            std::string text;
            for (int p = 0; p < 3; ++p) {
                text += "Character1: q" + std::to_string(p) + "?\n";
                text += "Character2: reply " + std::to_string(p) + " " + trait.code() + std::to_string(s) + "\n";
            }
            DialogueRecord rec = parse_dialogue_text(text, trait, sentence);
            ++counter;
            if (failures < 28 && counter % 35 == 0) {
                ++failures;
                const char* wrong = trait.dimension == Dimension::openness ? "Neuroticism" : "Openness";
                mock_c.script(validation_system_prompt(), validation_user_prompt(render_dialogue(rec)),
                              std::string("Reason: scripted\nResult: ") + wrong);
            }
        }
    }
    PipelineResult rc = run_pipeline(cfg_c, mock_c);
    const auto& av = rc.report.totals["auto_validation"];
    const size_t attempted = av["attempted"].get<size_t>();
    const size_t passed = av["passed"].get<size_t>();
    const double rate = av["pass_rate"].get<double>();
    char rate_str[16];
    std::snprintf(rate_str, sizeof(rate_str), "%.1f%%", 100.0 * rate);

    log << "identical dataset " << (dataset_identical ? "yes" : "NO") << ", identical report "
        << (report_identical ? "yes" : "NO") << "; validation " << passed << "/" << attempted << " = " << rate_str;
    fs::remove_all(base);
    return dataset_identical && report_identical && attempted == 1000 && passed == 972 &&
           std::string(rate_str) == "97.2%" &&
           passed + av["failed"].get<size_t>() == attempted;
}

// ---------------------------------------------------------------------------
// criterion 10: Welch t-test behavior

bool criterion_welch(std::ostream& log) {
    const std::vector<double> same = {2.0, 2.5, 3.0, 2.2};
    if (welch_p(same, same) != 1.0) {
        log << "identical samples gave p != 1";
        return false;
    }
    const std::vector<double> x = {1.1, 2.3, 1.9, 2.8};
    const std::vector<double> y = {2.0, 2.1, 3.4, 2.9, 3.3};
    if (welch_p(x, y) != welch_p(y, x)) {
        log << "symmetry violated";
        return false;
    }
    struct Fixture {
        std::vector<double> a, b;
        double p; // frozen from an independent high-precision reference
    };
    const std::vector<Fixture> fixtures = {
        {{1.1, 2.3, 1.9, 2.8}, {2.0, 2.1, 3.4, 2.9, 3.3}, 0.172423439874464},
        {{4.18, 4.88, 4.00, 4.58, 4.74}, {3.32, 2.57, 1.24, 2.85, 4.39}, 0.0324336742023556},
        {{0.5, 0.6, 0.7}, {0.52, 0.61, 0.69, 0.66}, 0.786916647568156},
        {{10.0, 10.1, 9.9, 10.05, 9.95, 10.02}, {10.5, 10.4, 10.6}, 0.00425490349874108},
    };
    double worst = 0.0;
    for (const Fixture& f : fixtures) worst = std::max(worst, std::fabs(welch_p(f.a, f.b) - f.p));
    log << "fixture max err " << worst;
    return worst <= 1e-9;
}

} // namespace

int main(int argc, char** argv) {
    std::optional<int> only;
    for (int i = 1; i < argc; ++i)
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[i + 1]);

    struct Criterion {
        int id;
        const char* name;
        std::function<bool(std::ostream&)> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "gradient correctness (finite differences <= 1e-4, 20 seeds, < 2 min)", criterion_gradients},
        {2, "specialization loss analytic cases exact to 1e-12", criterion_psl_exact},
        {3, "adapter parameter parity across expert counts at rank 32", criterion_parity},
        {4, "score-row aggregation arithmetic (4.48/2.87/1.60 and 4.94/1.23/3.72)", criterion_aggregation},
        {5, "specialization effect: PSL halves the mean off-diagonal Gram on every seed", criterion_specialization},
        {6, "trait conditioning: matching held-out cross-entropy wins >= 8/10, 2 of 3 seeds", criterion_conditioning},
        {7, "frozen base weights bit-identical across every training regime", criterion_frozen_base},
        {8, "logged psl identical across batches at fixed parameters (<= 1e-12)", criterion_psl_batch_independence},
        {9, "pipeline determinism and 972/1000 -> 97.2% pass-rate arithmetic", criterion_pipeline},
        {10, "Welch t-test: identity, symmetry, fixtures within 1e-9", criterion_welch},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        if (only && *only != c.id) continue;
        std::ostringstream detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail << "exception: " << e.what();
        }
        std::cout << (ok ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.name;
        if (!detail.str().empty()) std::cout << " [" << detail.str() << "]";
        std::cout << "\n";
        if (!ok) ++failures;
    }
    return failures;
}
