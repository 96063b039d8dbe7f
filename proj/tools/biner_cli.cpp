// biner: train, predict, bench and cache management for the bi-encoder
// zero-shot NER engine.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "biner/bench.hpp"
#include "biner/trainer.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using nlohmann::json;
using namespace biner;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitModel = 3;

json load_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open config: " + path);
    try {
        json j;
        is >> j;
        return j;
    } catch (const json::exception& e) {
        throw DataError("bad JSON in " + path + ": " + e.what());
    }
}

ModelConfig parse_model_config(const json& j) {
    return ModelConfig::from_json(j.dump());
}

TrainConfig parse_train_config(const json& j) {
    TrainConfig c;
    if (j.contains("lr_encoder")) c.lr_encoder = j["lr_encoder"].get<double>();
    if (j.contains("lr_other")) c.lr_other = j["lr_other"].get<double>();
    if (j.contains("weight_decay_encoder"))
        c.weight_decay_encoder = j["weight_decay_encoder"].get<double>();
    if (j.contains("weight_decay_other"))
        c.weight_decay_other = j["weight_decay_other"].get<double>();
    if (j.contains("grad_clip_norm")) c.grad_clip_norm = j["grad_clip_norm"].get<double>();
    if (j.contains("warmup_ratio")) c.warmup_ratio = j["warmup_ratio"].get<double>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("steps")) c.steps = j["steps"].get<int>();
    if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
    if (j.contains("shuffle_types")) c.shuffle_types = j["shuffle_types"].get<bool>();
    if (j.contains("neg_type_ratio")) c.neg_type_ratio = j["neg_type_ratio"].get<double>();
    if (j.contains("log_every")) c.log_every = j["log_every"].get<int>();
    if (j.contains("lambda_token")) c.lambda_token = j["lambda_token"].get<double>();
    if (j.contains("lambda_span")) c.lambda_span = j["lambda_span"].get<double>();
    if (j.contains("extra_type_pool"))
        c.extra_type_pool = j["extra_type_pool"].get<std::vector<std::string>>();
    if (j.contains("type_pool_size")) {
        auto pool = synthetic_label_pool(j["type_pool_size"].get<int>());
        c.extra_type_pool.insert(c.extra_type_pool.end(), pool.begin(), pool.end());
    }
    if (j.contains("metrics_csv")) c.metrics_csv = j["metrics_csv"].get<std::string>();
    return c;
}

LossConfig parse_loss_config(const json& j) {
    LossConfig c;
    if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
    if (j.contains("gamma")) c.gamma = j["gamma"].get<double>();
    if (j.contains("reduction"))
        c.reduction = reduction_from_string(j["reduction"].get<std::string>());
    if (j.contains("neg_rate")) c.neg_rate = j["neg_rate"].get<double>();
    if (j.contains("mask_strategy"))
        c.mask_strategy = mask_strategy_from_string(j["mask_strategy"].get<std::string>());
    if (j.contains("label_smoothing")) c.label_smoothing = j["label_smoothing"].get<double>();
    c.validate();
    return c;
}

SynthConfig parse_synth_config(const json& j) {
    SynthConfig c;
    if (j.contains("vocab_size")) c.vocab_size = j["vocab_size"].get<int>();
    if (j.contains("num_types")) c.num_types = j["num_types"].get<int>();
    if (j.contains("train_docs")) c.train_docs = j["train_docs"].get<int>();
    if (j.contains("test_docs")) c.test_docs = j["test_docs"].get<int>();
    if (j.contains("max_sentence_len")) c.max_sentence_len = j["max_sentence_len"].get<int>();
    return c;
}

std::vector<std::string> parse_labels_arg(const std::string& arg) {
    if (arg.empty()) throw DataError("no labels given");
    std::vector<std::string> labels;
    if (std::filesystem::exists(arg)) {
        std::ifstream is(arg);
        std::string line;
        while (std::getline(is, line)) {
            // trim
            const auto a = line.find_first_not_of(" \t\r");
            const auto b = line.find_last_not_of(" \t\r");
            if (a == std::string::npos) continue;
            labels.push_back(line.substr(a, b - a + 1));
        }
    } else {
        std::stringstream ss(arg);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) labels.push_back(item);
        }
    }
    if (labels.empty()) throw DataError("no labels parsed from: " + arg);
    return labels;
}

int cmd_train(const std::string& config_path, const std::string& resume) {
    json cfg = load_json_file(config_path);
    if (!cfg.contains("model") || !cfg.contains("train"))
        throw DataError("config needs \"model\" and \"train\" sections");

    ModelConfig mc = parse_model_config(cfg["model"]);
    TrainConfig tc = parse_train_config(cfg["train"]);
    LossConfig lc = cfg.contains("loss") ? parse_loss_config(cfg["loss"]) : LossConfig{};

    std::vector<AnnotatedDocument> train_docs, test_docs;
    EntityTypeSet types;
    const json& data = cfg.at("data");
    if (data.contains("synthetic")) {
        SynthCorpus corpus = generate_synthetic(parse_synth_config(data["synthetic"]),
                                                data.value("seed", 1));
        train_docs = std::move(corpus.train);
        test_docs = std::move(corpus.test);
        types = std::move(corpus.types);
    } else {
        train_docs = load_jsonl(data.at("train_jsonl").get<std::string>());
        if (data.contains("test_jsonl"))
            test_docs = load_jsonl(data.at("test_jsonl").get<std::string>());
        std::vector<std::string> labels;
        if (data.contains("labels"))
            labels = data["labels"].get<std::vector<std::string>>();
        else if (data.contains("labels_file"))
            labels = parse_labels_arg(data["labels_file"].get<std::string>());
        else
            throw DataError("data section needs \"labels\" or \"labels_file\"");
        types = EntityTypeSet::make(labels, mc.max_types_per_batch);
    }

    Model model = [&] {
        if (!resume.empty()) {
            std::cout << "resuming from " << resume << "\n";
            return load_model(resume);
        }
        std::vector<std::string> label_texts = types.labels;
        label_texts.insert(label_texts.end(), tc.extra_type_pool.begin(),
                           tc.extra_type_pool.end());
        return make_model(mc, train_docs, label_texts);
    }();

    std::cout << "training " << to_string(model.config.arch) << "/"
              << to_string(model.config.head) << " on " << train_docs.size() << " documents, "
              << types.size() << " types, " << tc.steps << " steps\n";
    TrainResult result = train(model, train_docs, types, tc, lc);
    for (const auto& l : result.logs)
        std::cout << "step " << l.step << " loss " << l.loss << " lr " << l.lr_encoder << "/"
                  << l.lr_other << " gnorm " << l.grad_norm << "\n";
    if (result.skipped_long_spans > 0)
        std::cout << "skipped " << result.skipped_long_spans << " gold spans wider than K="
                  << model.config.max_span_width << "\n";

    const double tau = cfg.contains("eval") ? cfg["eval"].value("tau", 0.4) : 0.4;
    const OverlapMode mode =
        cfg.contains("eval")
            ? overlap_mode_from_string(cfg["eval"].value("mode", std::string("flat")))
            : OverlapMode::flat;
    if (!test_docs.empty()) {
        EvalResult ev = evaluate(model, test_docs, types, tau, mode);
        std::cout << "eval: precision " << ev.precision << " recall " << ev.recall << " F1 "
                  << ev.f1 << " (" << ev.correct << "/" << ev.predicted << " predicted, "
                  << ev.gold << " gold)\n";
    }

    if (cfg.contains("output") && cfg["output"].contains("checkpoint")) {
        const std::string out = cfg["output"]["checkpoint"].get<std::string>();
        save_model(model, out);
        std::cout << "checkpoint written to " << out << "\n";
    }
    return kExitOk;
}

int cmd_predict(const std::string& model_path, const std::string& input_path,
                const std::string& output_path, const std::string& labels_arg, double tau,
                const std::string& mode_str, const std::string& cache_path, bool encode_misses,
                int threads) {
    Model model = load_model(model_path);
    std::vector<AnnotatedDocument> docs = load_jsonl(input_path);
    EntityTypeSet types =
        EntityTypeSet::make(parse_labels_arg(labels_arg), model.config.max_types_per_batch);
    const OverlapMode mode = overlap_mode_from_string(mode_str);

    LabelContext ctx;
    if (!cache_path.empty()) {
        if (model.config.arch == Arch::uni)
            throw ModelError("uni-encoder models do not use a label cache");
        LabelEmbeddingCache cache = load_cache(cache_path);
        ctx = make_label_context(model, types, cache, encode_misses);
    } else {
        ctx = make_label_context(model, types);
    }

    std::vector<std::vector<ScoredSpan>> results(docs.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, threads)) if (threads > 1)
#endif
    for (size_t i = 0; i < docs.size(); ++i)
        results[i] = predict_document(model, ctx, docs[i].tokens, tau, mode);

    std::ofstream os(output_path);
    if (!os) throw DataError("cannot open for writing: " + output_path);
    for (const auto& spans : results) {
        json entities = json::array();
        // contract: spans ordered by (start, end, type string)
        std::vector<ScoredSpan> sorted = spans;
        std::sort(sorted.begin(), sorted.end(), [&](const ScoredSpan& a, const ScoredSpan& b) {
            if (a.start != b.start) return a.start < b.start;
            if (a.end != b.end) return a.end < b.end;
            return types.labels[a.class_index] < types.labels[b.class_index];
        });
        for (const auto& s : sorted)
            entities.push_back({{"start", s.start},
                                {"end", s.end},
                                {"type", types.labels[s.class_index]},
                                {"score", s.probability}});
        os << json{{"entities", entities}}.dump() << "\n";
    }
    std::cout << "wrote " << docs.size() << " prediction lines to " << output_path << "\n";
    return kExitOk;
}

int cmd_bench(const std::string& model_path, const std::string& label_counts,
              const std::string& lengths, int repeats, bool cached, const std::string& arch,
              uint64_t seed, double tau, const std::string& csv_path) {
    Model model = load_model(model_path);
    if (!arch.empty() && arch_from_string(arch) != model.config.arch)
        throw ModelError("model arch is " + std::string(to_string(model.config.arch)) +
                         ", not " + arch);

    BenchConfig bc;
    bc.repeats = repeats;
    bc.cached = cached;
    bc.seed = seed;
    bc.tau = tau;
    auto parse_ints = [](const std::string& s) {
        std::vector<int> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) out.push_back(std::stoi(item));
        if (out.empty()) throw DataError("empty integer list");
        return out;
    };
    if (!label_counts.empty()) bc.label_counts = parse_ints(label_counts);
    if (!lengths.empty()) bc.input_lengths = parse_ints(lengths);

    std::vector<BenchCell> cells = run_bench(model, bc);
    std::cout << bench_table(cells);
    if (!csv_path.empty()) {
        std::ofstream os(csv_path);
        if (!os) throw DataError("cannot open for writing: " + csv_path);
        os << bench_csv(cells);
        std::cout << "CSV written to " << csv_path << "\n";
    }
    return kExitOk;
}

int cmd_cache_build(const std::string& model_path, const std::string& labels_arg,
                    const std::string& out_path, int batch_size) {
    Model model = load_model(model_path);
    if (model.config.arch == Arch::uni)
        throw ModelError("uni-encoder models have no label encoder to cache");
    std::vector<std::string> labels = parse_labels_arg(labels_arg);
    int dups = 0;
    LabelEmbeddingCache cache = build_cache(*model.label_encoder,
                                            model.label_encoder_fingerprint(), labels,
                                            batch_size, &dups);
    if (dups > 0) std::cout << "warning: collapsed " << dups << " duplicate labels\n";
    save_cache(cache, out_path);
    std::cout << "cached " << cache.size() << " labels of dim " << cache.dim << " to "
              << out_path << "\n";
    return kExitOk;
}

int cmd_cache_inspect(const std::string& path) {
    LabelEmbeddingCache cache = load_cache(path);
    std::cout << "labels:      " << cache.size() << "\n"
              << "dim:         " << cache.dim << "\n"
              << "fingerprint: " << std::hex << cache.fingerprint << std::dec << "\n"
              << "metadata:    " << cache.metadata << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bi-encoder zero-shot NER: train, predict, bench and cache tools"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model from a JSON config");
    std::string config_path, resume;
    train_cmd->add_option("--config", config_path, "JSON config file")->required();
    train_cmd->add_option("--resume", resume, "checkpoint to continue from");

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "annotate a JSONL file");
    std::string model_path, input_path, output_path, labels_arg, mode_str = "flat", cache_path;
    double tau = 0.4;
    bool encode_misses = false;
    int threads = 1;
    predict_cmd->add_option("--model", model_path, "model checkpoint")->required();
    predict_cmd->add_option("--input", input_path, "input JSONL")->required();
    predict_cmd->add_option("--output", output_path, "output JSONL")->required();
    predict_cmd->add_option("--labels", labels_arg, "label file or comma list")->required();
    predict_cmd->add_option("--tau", tau, "probability threshold");
    predict_cmd->add_option("--mode", mode_str, "flat|multi_label|nested");
    predict_cmd->add_option("--cache", cache_path, "label embedding cache");
    predict_cmd->add_flag("--encode-misses", encode_misses,
                          "encode labels missing from the cache on the fly");
    predict_cmd->add_option("--threads", threads, "document-parallel prediction threads");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "throughput across label counts");
    std::string bench_model, label_counts, lengths, bench_arch, csv_path;
    int repeats = 10;
    bool cached = false;
    uint64_t bench_seed = 17;
    double bench_tau = 0.4;
    bench_cmd->add_option("--model", bench_model, "model checkpoint")->required();
    bench_cmd->add_option("--label-counts", label_counts, "comma list of L values");
    bench_cmd->add_option("--lengths", lengths, "comma list of T values (words)");
    bench_cmd->add_option("--repeats", repeats, "timed passes per cell");
    bench_cmd->add_flag("--cached", cached, "use precomputed label embeddings");
    bench_cmd->add_option("--arch", bench_arch, "expected model arch (bi|uni)");
    bench_cmd->add_option("--seed", bench_seed, "workload seed");
    bench_cmd->add_option("--tau", bench_tau, "probability threshold");
    bench_cmd->add_option("--csv", csv_path, "write the report CSV here");

    // cache
    auto* cache_cmd = app.add_subcommand("cache", "label-embedding cache tools");
    cache_cmd->require_subcommand(1);
    auto* cache_build = cache_cmd->add_subcommand("build", "encode labels into a cache file");
    std::string cb_model, cb_labels, cb_out;
    int cb_batch = 64;
    cache_build->add_option("--model", cb_model, "model checkpoint")->required();
    cache_build->add_option("--labels", cb_labels, "label file or comma list")->required();
    cache_build->add_option("--out", cb_out, "cache file to write")->required();
    cache_build->add_option("--batch-size", cb_batch, "labels per work chunk");
    auto* cache_inspect = cache_cmd->add_subcommand("inspect", "print cache header info");
    std::string ci_path;
    cache_inspect->add_option("--cache", ci_path, "cache file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*train_cmd) return cmd_train(config_path, resume);
        if (*predict_cmd)
            return cmd_predict(model_path, input_path, output_path, labels_arg, tau, mode_str,
                               cache_path, encode_misses, threads);
        if (*bench_cmd)
            return cmd_bench(bench_model, label_counts, lengths, repeats, cached, bench_arch,
                             bench_seed, bench_tau, csv_path);
        if (*cache_build) return cmd_cache_build(cb_model, cb_labels, cb_out, cb_batch);
        if (*cache_inspect) return cmd_cache_inspect(ci_path);
    } catch (const ModelError& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return kExitModel;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
