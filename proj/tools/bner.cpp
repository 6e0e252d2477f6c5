#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bner/common.hpp"
#include "bner/config.hpp"
#include "bner/data.hpp"
#include "bner/eval.hpp"
#include "bner/gradcheck.hpp"
#include "bner/model.hpp"
#include "bner/trainer.hpp"

namespace {

using namespace bner;

void apply_overrides(Config& cfg, const std::vector<std::string>& sets) {
    for (const auto& kv : sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got: " + kv);
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
}

DecodeMode parse_mode(const std::string& mode) {
    if (mode == "nested") return DecodeMode::Nested;
    if (mode == "flat") return DecodeMode::Flat;
    throw ConfigError("mode must be nested or flat, got: " + mode);
}

std::string metrics_line(const EpochMetrics& m) {
    char buf[160];
    std::string line = "{\"epoch\":" + std::to_string(m.epoch);
    std::snprintf(buf, sizeof(buf), ",\"train_loss\":%.6f", m.train_loss);
    line += buf;
    if (m.train_f1 >= 0.0) {
        std::snprintf(buf, sizeof(buf), ",\"train_f1\":%.6f", m.train_f1);
        line += buf;
    }
    if (m.dev_f1 >= 0.0) {
        std::snprintf(buf, sizeof(buf), ",\"dev_f1\":%.6f", m.dev_f1);
        line += buf;
    }
    return line + "}";
}

int cmd_train(const std::string& config_path, const std::string& train_path,
              const std::string& dev_path, const std::string& out_dir,
              const std::vector<std::string>& sets, std::uint64_t seed, bool seed_given,
              int threads) {
    Config cfg = config_path.empty() ? Config{} : Config::load(config_path);
    apply_overrides(cfg, sets);
    if (seed_given) cfg.seed = seed;
    cfg.validate();

    Split train_split = read_corpus_file(train_path);
    Split dev_split;
    if (!dev_path.empty()) dev_split = read_corpus_file(dev_path);

    std::filesystem::create_directories(out_dir);
    Model model = Model::build(cfg, train_split);

    std::string metrics_path = out_dir + "/metrics.jsonl";
    std::ofstream metrics(metrics_path);
    if (!metrics) throw DataError("cannot write metrics log: " + metrics_path);

    log_info("training on " + std::to_string(train_split.size()) + " sentences, " +
             std::to_string(model.categories().size()) + " categories, input dim " +
             std::to_string(cfg.input_dim()));
    TrainResult result =
        train(model, train_split, dev_split.empty() ? nullptr : &dev_split, threads,
              [&](const EpochMetrics& m) {
                  metrics << metrics_line(m) << '\n';
                  metrics.flush();
                  log_info(metrics_line(m));
              });

    std::string ckpt_path = out_dir + "/checkpoint.bner";
    model.save_checkpoint(ckpt_path);

    nlohmann::ordered_json manifest;
    manifest["config"] = cfg.to_text();
    manifest["seed"] = cfg.seed;
    manifest["train_path"] = train_path;
    manifest["dev_path"] = dev_path;
    manifest["checkpoint"] = ckpt_path;
    manifest["metrics"] = metrics_path;
    manifest["chosen_epoch"] = result.chosen_epoch;
    manifest["early_stopped"] = result.early_stopped;
    std::ofstream mf(out_dir + "/manifest.json");
    mf << manifest.dump(2) << '\n';

    std::printf("checkpoint %s (epoch %d)\n", ckpt_path.c_str(), result.chosen_epoch);
    return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& input_path,
                const std::string& mode_str, const std::string& out_path,
                const std::string& conll_out, const std::vector<std::string>& sets, int threads) {
    Model model = Model::load_checkpoint(ckpt_path);
    apply_overrides(model.config, sets);
    model.load_resources();
    DecodeMode mode = parse_mode(mode_str);

    Split input = read_corpus_file(input_path);
    Split predicted(input.size());
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    int workers = std::max(1, std::min<int>(threads, static_cast<int>(input.size())));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (int i = next.fetch_add(1); i < static_cast<int>(input.size());
                     i = next.fetch_add(1))
                    predicted[static_cast<std::size_t>(i)] = model.predict_annotated(
                        input[static_cast<std::size_t>(i)].sentence, mode);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    write_spans(predicted, out_path);
    if (!conll_out.empty()) {
        if (mode != DecodeMode::Flat)
            throw ConfigError("--conll-out requires --mode flat (nested spans cannot be tagged)");
        write_conll(predicted, conll_out);
    }
    std::printf("predictions written to %s (%zu sentences)\n", out_path.c_str(), predicted.size());
    return 0;
}

int cmd_evaluate(const std::string& gold_path, const std::string& pred_path,
                 const std::string& json_out) {
    Split gold = read_corpus_file(gold_path);
    Split pred = read_corpus_file(pred_path);
    EvalReport report = evaluate(gold, pred);

    std::printf("%s", report_table({{"model", report}}).c_str());
    std::printf("\nper category:\n");
    for (const auto& [name, counts] : report.per_category)
        std::printf("  %-12s P %5.1f  R %5.1f  F1 %5.1f  (gold %lld, pred %lld, correct %lld)\n",
                    name.c_str(), 100.0 * counts.precision(), 100.0 * counts.recall(),
                    100.0 * counts.f1(), counts.gold, counts.predicted, counts.correct);
    std::printf("macro F1 %5.1f\n", 100.0 * report.macro_f1());
    if (!json_out.empty()) {
        std::ofstream out(json_out);
        if (!out) throw DataError("cannot write report: " + json_out);
        out << report.to_json() << '\n';
    }
    return 0;
}

int cmd_decode(const std::string& scor_path, const std::string& mode_str) {
    ScoreTensor t = read_scor(scor_path);
    auto selected = decode(t, parse_mode(mode_str));
    std::sort(selected.begin(), selected.end(), [](const LabeledSpan& a, const LabeledSpan& b) {
        return a.span.start != b.span.start ? a.span.start < b.span.start
                                            : a.span.end < b.span.end;
    });
    for (const auto& ls : selected)
        std::printf("%d %d %d %.6f\n", ls.span.start, ls.span.end, ls.category, ls.score);
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    auto results = gradcheck(seed);
    bool all_pass = true;
    for (const auto& r : results) {
        std::printf("%-18s %4d entries  max rel err %.3e  %s\n", r.group.c_str(), r.checked,
                    r.max_rel_err, r.pass ? "ok" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    if (!all_pass) {
        std::fprintf(stderr, "gradient check failed\n");
        return 4;
    }
    return 0;
}

int cmd_synth(const std::string& kind, int size, std::uint64_t seed, const std::string& out_path,
              bool as_conll, const std::string& emb_out, int emb_dim, std::uint32_t first_id) {
    SynthOptions opts;
    if (kind == "flat") opts.kind = SynthOptions::Kind::Flat;
    else if (kind == "nested") opts.kind = SynthOptions::Kind::Nested;
    else throw ConfigError("synth kind must be flat or nested, got: " + kind);
    opts.size = size;
    opts.seed = seed;
    opts.first_id = first_id;

    Split corpus = synth_corpus(opts);
    if (as_conll) {
        if (opts.kind != SynthOptions::Kind::Flat)
            throw ConfigError("--conll requires --kind flat");
        write_conll(corpus, out_path);
    } else {
        write_spans(corpus, out_path);
    }
    if (!emb_out.empty()) write_synth_embeddings(emb_out, emb_dim, seed);
    std::printf("wrote %zu sentences to %s\n", corpus.size(), out_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"biaffine span-based named entity recognizer"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model");
    std::string config_path, train_path, dev_path, out_dir = "run";
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    int threads = 1;
    train_cmd->add_option("--config", config_path, "key=value config file");
    train_cmd->add_option("--train", train_path, "training corpus")->required();
    train_cmd->add_option("--dev", dev_path, "development corpus");
    train_cmd->add_option("--out", out_dir, "output directory");
    train_cmd->add_option("--set", sets, "config override key=value");
    auto* seed_opt = train_cmd->add_option("--seed", seed, "random seed (overrides config)");
    train_cmd->add_option("--threads", threads, "worker threads");

    // predict
    auto* pred_cmd = app.add_subcommand("predict", "predict spans with a checkpoint");
    std::string ckpt_path, input_path, mode_str = "flat", pred_out = "predictions.jsonl",
                conll_out;
    pred_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    pred_cmd->add_option("--input", input_path, "input corpus")->required();
    pred_cmd->add_option("--mode", mode_str, "nested|flat");
    pred_cmd->add_option("--out", pred_out, "output span file (JSON lines)");
    pred_cmd->add_option("--conll-out", conll_out, "also write CoNLL (flat mode only)");
    pred_cmd->add_option("--set", sets, "config override key=value");
    pred_cmd->add_option("--threads", threads, "worker threads");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "score predictions against gold");
    std::string gold_path, pred_path, json_out;
    eval_cmd->add_option("--gold", gold_path, "gold corpus")->required();
    eval_cmd->add_option("--pred", pred_path, "predicted corpus")->required();
    eval_cmd->add_option("--json-out", json_out, "write the report as JSON");

    // decode
    auto* dec_cmd = app.add_subcommand("decode", "decode a SCOR score dump");
    std::string scor_path;
    dec_cmd->add_option("--scores", scor_path, "SCOR dump file")->required();
    dec_cmd->add_option("--mode", mode_str, "nested|flat");

    // gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
    std::uint64_t grad_seed = 1;
    grad_cmd->add_option("--seed", grad_seed, "random seed");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus");
    std::string kind = "flat", synth_out = "synth.jsonl", emb_out;
    int size = 200, emb_dim = 300;
    std::uint32_t first_id = 0;
    bool as_conll = false;
    std::uint64_t synth_seed = 1;
    synth_cmd->add_option("--kind", kind, "flat|nested");
    synth_cmd->add_option("--size", size, "number of sentences");
    synth_cmd->add_option("--seed", synth_seed, "random seed");
    synth_cmd->add_option("--out", synth_out, "output corpus path");
    synth_cmd->add_flag("--conll", as_conll, "write CoNLL instead of JSON lines");
    synth_cmd->add_option("--emb-out", emb_out, "also write synthetic static embeddings");
    synth_cmd->add_option("--emb-dim", emb_dim, "embedding dimension for --emb-out");
    synth_cmd->add_option("--first-id", first_id, "id of the first sentence");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (train_cmd->parsed())
            return cmd_train(config_path, train_path, dev_path, out_dir, sets, seed,
                             seed_opt->count() > 0, threads);
        if (pred_cmd->parsed())
            return cmd_predict(ckpt_path, input_path, mode_str, pred_out, conll_out, sets,
                               threads);
        if (eval_cmd->parsed()) return cmd_evaluate(gold_path, pred_path, json_out);
        if (dec_cmd->parsed()) return cmd_decode(scor_path, mode_str);
        if (grad_cmd->parsed()) return cmd_gradcheck(grad_seed);
        if (synth_cmd->parsed())
            return cmd_synth(kind, size, synth_seed, synth_out, as_conll, emb_out, emb_dim,
                             first_id);
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 4;
    }
    return 0;
}
