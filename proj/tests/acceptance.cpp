// Acceptance suite: one pass/fail line per criterion. Heavier end-to-end runs
// go through the CLI binary (argv[1]); algorithmic checks use the library.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "bner/data.hpp"
#include "bner/decoder.hpp"
#include "bner/eval.hpp"
#include "bner/gradcheck.hpp"
#include "bner/rng.hpp"
#include "bner/scorer.hpp"
#include "bner/trainer.hpp"

using namespace bner;
using Clock = std::chrono::steady_clock;

namespace {

std::string g_bner = "./bner";
const std::string kDir = "acceptance_scratch";

std::string p(const std::string& name) { return kDir + "/" + name; }

double elapsed(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

int run(const std::string& args, std::string* out = nullptr) {
    std::string out_path = p("cmd_out.txt");
    std::string cmd = g_bner + " " + args + " > " + out_path + " 2> " + p("cmd_err.txt");
    int status = std::system(cmd.c_str());
    if (out) {
        std::ifstream in(out_path);
        std::stringstream buf;
        buf << in.rdbuf();
        *out = buf.str();
    }
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

ScoreTensor random_scores(Rng& rng, int max_l, int max_c) {
    int l = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_l)));
    int c = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_c - 1)));
    ScoreTensor t;
    t.length = l;
    t.categories = c;
    t.values.resize(static_cast<std::size_t>(l) * l * c);
    for (auto& v : t.values) v = std::round(rng.uniform(-2.0, 2.0) * 4.0) / 4.0;
    return t;
}

std::set<std::tuple<int, int, int>> as_set(const std::vector<LabeledSpan>& spans) {
    std::set<std::tuple<int, int, int>> out;
    for (const auto& ls : spans) out.insert({ls.span.start, ls.span.end, ls.category});
    return out;
}

struct TrainedRun {
    double wall = 0.0;
    int epochs = 0;
    double final_train_f1 = -1.0;
    std::string out_dir;
    bool ok = false;
};

// Table-defaults training on a synthetic corpus (contextual disabled; static
// vectors from the generated embedding file), early-stopped at train F1 1.
TrainedRun table_defaults_run(const std::string& kind, std::uint64_t seed) {
    TrainedRun r;
    r.out_dir = p("run5_" + kind);
    std::string train_path = p("train5_" + kind + ".jsonl");
    std::string emb_path = p("emb5.txt");
    if (run("synth --kind " + kind + " --size 200 --seed " + std::to_string(seed) + " --out " +
            train_path + " --emb-out " + emb_path) != 0)
        return r;
    auto start = Clock::now();
    if (run("train --train " + train_path + " --out " + r.out_dir + " --threads 2 --seed " +
            std::to_string(seed) + " --set static_embeddings=" + emb_path +
            " --set epochs=200 --set early_stop_train_f1=1.0") != 0)
        return r;
    r.wall = elapsed(start);

    std::ifstream metrics(r.out_dir + "/metrics.jsonl");
    std::string line, last;
    while (std::getline(metrics, line))
        if (!line.empty()) {
            last = line;
            ++r.epochs;
        }
    double f1 = -1.0;
    auto pos = last.find("\"train_f1\":");
    if (pos != std::string::npos) f1 = std::atof(last.c_str() + pos + 11);
    r.final_train_f1 = f1;
    r.ok = true;
    return r;
}

double heldout_f1(const std::string& ckpt, const std::string& kind, const std::string& mode,
                  std::uint64_t seed) {
    std::string held = p("held_" + kind + "_" + std::to_string(seed) + ".jsonl");
    std::string pred = p("heldpred_" + kind + "_" + std::to_string(seed) + ".jsonl");
    if (run("synth --kind " + kind + " --size 50 --seed " + std::to_string(seed) +
            " --first-id 100000 --out " + held) != 0)
        return -1.0;
    if (run("predict --checkpoint " + ckpt + " --input " + held + " --mode " + mode + " --out " +
            pred + " --threads 2") != 0)
        return -1.0;
    return evaluate(read_spans(held), read_spans(pred)).micro.f1();
}

int g_failures = 0;

void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

char buf[512];

}  // namespace

// 1. Gradient fidelity on the reduced configuration.
static void criterion_1() {
    auto start = Clock::now();
    auto results = gradcheck(1, 1e-4, 80);
    bool pass = !results.empty();
    double worst = 0.0;
    int entries = 0;
    for (const auto& r : results) {
        pass = pass && r.pass;
        worst = std::max(worst, r.max_rel_err);
        entries += r.checked;
    }
    double secs = elapsed(start);
    pass = pass && secs < 60.0;
    std::snprintf(buf, sizeof(buf), "%zu groups, %d entries, max rel err %.2e, %.1f s",
                  results.size(), entries, worst, secs);
    report(1, "gradient fidelity vs finite differences", pass, buf);
}

// 2. decode == oracle_decode on 1,000 seeded random score tensors.
static void criterion_2() {
    auto start = Clock::now();
    Rng rng(20240202);
    int mismatches = 0;
    for (int i = 0; i < 1000; ++i) {
        auto t = random_scores(rng, 6, 4);
        for (auto mode : {DecodeMode::Nested, DecodeMode::Flat})
            if (as_set(decode(t, mode)) != as_set(oracle_decode(t, mode))) ++mismatches;
    }
    double secs = elapsed(start);
    bool pass = mismatches == 0 && secs < 30.0;
    std::snprintf(buf, sizeof(buf), "1000 tensors x 2 modes, %d mismatches, %.1f s", mismatches,
                  secs);
    report(2, "decoder equals the independent oracle", pass, buf);
}

// 3. Constraint soundness over 10,000 random decodes per mode.
static void criterion_3() {
    Rng rng(303);
    long long violations = 0;
    for (int i = 0; i < 10000; ++i) {
        auto t = random_scores(rng, 8, 5);
        auto flat = decode(t, DecodeMode::Flat);
        for (std::size_t a = 0; a < flat.size(); ++a)
            for (std::size_t b = a + 1; b < flat.size(); ++b)
                if (!(flat[a].span.end < flat[b].span.start ||
                      flat[b].span.end < flat[a].span.start))
                    ++violations;
        auto nested = decode(t, DecodeMode::Nested);
        for (std::size_t a = 0; a < nested.size(); ++a)
            for (std::size_t b = a + 1; b < nested.size(); ++b)
                if (clashes(nested[a].span, nested[b].span)) ++violations;
    }
    std::snprintf(buf, sizeof(buf), "10000 decodes per mode, %lld violations", violations);
    report(3, "flat disjointness and nested no-crossing", violations == 0, buf);
}

// 4. The worked boundary-clash example through cmd_decode on a fixture dump.
static void criterion_4() {
    // Tokens [the, Bank, of, China]: candidate spans (0,2) and (1,3) clash,
    // (2,2) nests inside (1,3); ranking keeps (1,3) and, in nested mode, (2,2).
    bool pass = clashes({0, 2}, {1, 3}) && !clashes({1, 3}, {2, 2}) &&
                contains_or_inside({1, 3}, {2, 2});

    ScoreTensor t;
    t.length = 4;
    t.categories = 3;
    t.values.assign(4 * 4 * 3, 0.0);
    for (int s = 0; s < 4; ++s)
        for (int e = 0; e < 4; ++e) t.at(s, e, 0) = 1.0;
    t.at(1, 3, 2) = 9.0;
    t.at(0, 2, 1) = 7.0;
    t.at(2, 2, 1) = 5.0;
    write_scor(p("bank_of_china.scor"), t);

    std::string nested, flat;
    pass = pass && run("decode --scores " + p("bank_of_china.scor") + " --mode nested", &nested) == 0;
    pass = pass && run("decode --scores " + p("bank_of_china.scor") + " --mode flat", &flat) == 0;
    pass = pass && nested == "1 3 2 9.000000\n2 2 1 5.000000\n";
    pass = pass && flat == "1 3 2 9.000000\n";
    report(4, "worked clash/nesting example via cmd_decode", pass,
           pass ? "nested kept the inner span, flat kept only the winner"
                : "unexpected decode output");
}

static TrainedRun g_flat_run;
static TrainedRun g_nested_run;

// 5. End-to-end overfit with table-default hyperparameters.
static void criterion_5() {
    g_flat_run = table_defaults_run("flat", 1101);
    g_nested_run = table_defaults_run("nested", 1102);
    bool pass = g_flat_run.ok && g_nested_run.ok;
    pass = pass && g_flat_run.final_train_f1 == 1.0 && g_flat_run.epochs <= 200;
    pass = pass && g_nested_run.final_train_f1 == 1.0 && g_nested_run.epochs <= 200;
    pass = pass && g_flat_run.wall < 600.0 && g_nested_run.wall < 600.0;
    std::snprintf(buf, sizeof(buf),
                  "flat F1 %.3f in %d epochs (%.0f s), nested F1 %.3f in %d epochs (%.0f s)",
                  g_flat_run.final_train_f1, g_flat_run.epochs, g_flat_run.wall,
                  g_nested_run.final_train_f1, g_nested_run.epochs, g_nested_run.wall);
    report(5, "train-set F1 reaches 1.000 under table defaults", pass, buf);
}

// 6. Generalization to a disjoint held-out split.
static void criterion_6() {
    double flat_f1 = heldout_f1(g_flat_run.out_dir + "/checkpoint.bner", "flat", "flat", 2101);
    double nested_f1 =
        heldout_f1(g_nested_run.out_dir + "/checkpoint.bner", "nested", "nested", 2102);
    bool pass = flat_f1 >= 0.95 && nested_f1 >= 0.95;
    std::snprintf(buf, sizeof(buf), "held-out F1: flat %.3f, nested %.3f (threshold 0.95)",
                  flat_f1, nested_f1);
    report(6, "generalization smoke test", pass, buf);
}

// 7. Removing the bilinear term never beats the full model (direction only).
static void criterion_7() {
    std::string train_path = p("abl_train.jsonl");
    std::string held_path = p("abl_held.jsonl");
    std::string emb_path = p("abl_emb.txt");
    bool pass = run("synth --kind flat --size 120 --seed 7001 --out " + train_path +
                    " --emb-out " + emb_path + " --emb-dim 64") == 0;
    pass = pass && run("synth --kind flat --size 50 --seed 7777 --first-id 100000 --out " +
                       held_path) == 0;

    double mean_full = 0.0, mean_ablated = 0.0;
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        for (bool bilinear : {true, false}) {
            std::string out_dir =
                p("abl_" + std::to_string(seed) + (bilinear ? "_full" : "_nobil"));
            pass = pass &&
                   run("train --train " + train_path + " --out " + out_dir +
                       " --threads 2 --seed " + std::to_string(seed) +
                       " --set static_embeddings=" + emb_path +
                       " --set static_dim=64 --set bilstm_size=48 --set bilstm_layers=1" +
                       " --set ffnn_size=32 --set epochs=40 --set early_stop_train_f1=1.0" +
                       std::string(" --set use_bilinear=") + (bilinear ? "true" : "false")) == 0;
            if (!pass) break;
            std::string pred = out_dir + "/pred.jsonl";
            pass = pass && run("predict --checkpoint " + out_dir + "/checkpoint.bner --input " +
                               held_path + " --mode flat --out " + pred + " --threads 2") == 0;
            if (!pass) break;
            double f1 = evaluate(read_spans(held_path), read_spans(pred)).micro.f1();
            (bilinear ? mean_full : mean_ablated) += f1 / 3.0;
        }
        if (!pass) break;
    }
    pass = pass && mean_ablated <= mean_full;
    std::snprintf(buf, sizeof(buf), "mean held-out F1 over 3 seeds: full %.4f vs - biaffine %.4f",
                  mean_full, mean_ablated);
    report(7, "ablating the bilinear term does not win", pass, buf);
}

// 8. Format round-trips and hand-counted evaluator fixtures.
static void criterion_8() {
    bool pass = true;
    Rng rng(808);
    for (int iter = 0; iter < 100 && pass; ++iter) {
        SynthOptions opts;
        opts.kind = iter % 2 == 0 ? SynthOptions::Kind::Flat : SynthOptions::Kind::Nested;
        opts.size = 20;
        opts.seed = rng.u64();
        auto split = synth_corpus(opts);

        std::string jsonl = p("rt.jsonl");
        write_spans(split, jsonl);
        auto back = read_spans(jsonl);
        pass = pass && back.size() == split.size();
        for (std::size_t i = 0; pass && i < split.size(); ++i)
            pass = back[i].sentence.tokens == split[i].sentence.tokens &&
                   back[i].gold == split[i].gold && back[i].sentence.id == split[i].sentence.id;

        if (opts.kind == SynthOptions::Kind::Flat) {
            std::string conll = p("rt.conll");
            write_conll(split, conll);
            auto cback = read_conll(conll);
            pass = pass && cback.size() == split.size();
            for (std::size_t i = 0; pass && i < split.size(); ++i)
                pass = cback[i].sentence.tokens == split[i].sentence.tokens &&
                       cback[i].gold == split[i].gold;
        }
    }

    // Ten fixture pairs with hand-counted gold/predicted/correct totals.
    struct Fixture {
        std::vector<GoldSpan> gold, pred;
        long long correct;
    };
    std::vector<Fixture> fixtures = {
        {{{0, 1, "A"}}, {{0, 1, "A"}}, 1},
        {{{0, 1, "A"}}, {{0, 1, "B"}}, 0},
        {{{0, 1, "A"}, {3, 4, "B"}}, {{0, 1, "A"}}, 1},
        {{{0, 1, "A"}}, {{0, 1, "A"}, {3, 4, "B"}}, 1},
        {{{0, 0, "A"}, {1, 1, "A"}, {2, 2, "A"}}, {{0, 0, "A"}, {1, 1, "A"}, {3, 3, "A"}}, 2},
        {{{0, 5, "C"}}, {{0, 4, "C"}}, 0},
        {{}, {{0, 1, "A"}}, 0},
        {{{0, 1, "A"}}, {}, 0},
        {{{0, 2, "A"}, {1, 1, "B"}}, {{0, 2, "A"}, {1, 1, "B"}}, 2},
        {{{2, 3, "B"}, {5, 6, "A"}}, {{2, 3, "A"}, {5, 6, "A"}}, 1},
    };
    for (std::size_t i = 0; pass && i < fixtures.size(); ++i) {
        const auto& f = fixtures[i];
        AnnotatedSentence g, q;
        g.sentence.id = q.sentence.id = 0;
        g.sentence.tokens.assign(8, "w");
        q.sentence.tokens.assign(8, "w");
        g.gold.insert(f.gold.begin(), f.gold.end());
        q.gold.insert(f.pred.begin(), f.pred.end());
        auto report_i = evaluate({g}, {q});
        long long ng = static_cast<long long>(f.gold.size());
        long long np = static_cast<long long>(f.pred.size());
        pass = report_i.micro.gold == ng && report_i.micro.predicted == np &&
               report_i.micro.correct == f.correct;
        double expect_p = np > 0 ? double(f.correct) / double(np) : 0.0;
        double expect_r = ng > 0 ? double(f.correct) / double(ng) : 0.0;
        double expect_f = expect_p + expect_r > 0.0
                              ? 2.0 * expect_p * expect_r / (expect_p + expect_r)
                              : 0.0;
        pass = pass && report_i.micro.precision() == expect_p &&
               report_i.micro.recall() == expect_r && report_i.micro.f1() == expect_f;
    }
    report(8, "format round-trips and hand-counted evaluator fixtures", pass,
           pass ? "100 corpora round-tripped, 10 fixtures exact" : "mismatch detected");
}

// 9. Bitwise determinism of cmd_train across reruns and thread counts.
static void criterion_9() {
    std::string train_path = p("det_train.jsonl");
    std::string emb_path = p("det_emb.txt");
    bool pass = run("synth --kind flat --size 40 --seed 909 --out " + train_path + " --emb-out " +
                    emb_path + " --emb-dim 48") == 0;
    std::string common = "train --train " + train_path + " --seed 909" +
                         " --set static_embeddings=" + emb_path +
                         " --set static_dim=48 --set bilstm_size=32 --set bilstm_layers=2" +
                         " --set ffnn_size=24 --set epochs=3";
    pass = pass && run(common + " --threads 1 --out " + p("det_a")) == 0;
    pass = pass && run(common + " --threads 1 --out " + p("det_b")) == 0;
    pass = pass && run(common + " --threads 4 --out " + p("det_c")) == 0;
    std::string a = slurp(p("det_a/metrics.jsonl"));
    pass = pass && !a.empty() && a == slurp(p("det_b/metrics.jsonl")) &&
           a == slurp(p("det_c/metrics.jsonl"));
    pass = pass && slurp(p("det_a/checkpoint.bner")) == slurp(p("det_c/checkpoint.bner"));
    report(9, "seeded reruns and thread counts are byte-identical", pass,
           pass ? "metrics logs and checkpoints match" : "outputs differ");
}

int main(int argc, char** argv) {
    if (argc > 1) g_bner = argv[1];
    std::filesystem::create_directories(kDir);

    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();

    std::printf("%d of 9 criteria passed\n", 9 - g_failures);
    return g_failures == 0 ? 0 : 1;
}
