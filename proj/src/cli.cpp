#include "t2v/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "t2v/checkpoint.hpp"
#include "t2v/model.hpp"
#include "t2v/retrieval.hpp"
#include "t2v/synth_data.hpp"
#include "t2v/trainer.hpp"

namespace t2v {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot write file " + path);
    out << text;
}

std::string corpus_path(const std::string& dir) { return dir + "/corpus.jsonl"; }

int run_gen_data(const std::string& spec_file, const std::string& out_dir) {
    const CorpusSpec spec = spec_from_json_text(read_file(spec_file));
    const SyntheticCorpus corpus = generate_corpus(spec);
    std::filesystem::create_directories(out_dir);
    save_corpus(corpus, corpus_path(out_dir));
    std::cout << "wrote " << corpus_path(out_dir) << " videos=" << corpus.videos.size()
              << " queries=" << corpus.queries.size() << " hash=" << manifest_hash(corpus)
              << "\n";
    return 0;
}

int run_train(const std::string& config_file, const std::string& data_dir,
              const std::string& ckpt_path) {
    const TrainConfig cfg = config_from_json_text(read_file(config_file));
    const SyntheticCorpus corpus = load_corpus(corpus_path(data_dir));
    const TrainOutput out = train_model(cfg, corpus);
    if (const auto parent = std::filesystem::path(ckpt_path).parent_path(); !parent.empty())
        std::filesystem::create_directories(parent);
    save_checkpoint(out.model, out.adam, out.steps, manifest_hash(corpus), ckpt_path);
    if (out.aborted) {
        std::cerr << "error: train aborted at step " << out.steps << " (" << out.abort_reason
                  << "); last good state written to " << ckpt_path << "\n";
        return 1;
    }
    std::cout << "wrote " << ckpt_path << " steps=" << out.steps
              << " final_total=" << out.trace.back().total << "\n";
    return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& data_dir, const std::string& method,
             bool dsl, double noise_ratio, const std::string& report_path) {
    const LoadedCheckpoint ck = load_checkpoint(ckpt_path);
    const SyntheticCorpus corpus = load_corpus(corpus_path(data_dir));
    const std::string hash = manifest_hash(corpus);
    if (ck.manifest_hash != hash)
        throw std::invalid_argument("checkpoint was trained on a different corpus (hash " +
                                    ck.manifest_hash + " vs " + hash + ")");
    EvalSpec spec;
    spec.method = score_method_from_string(method);
    spec.dsl = dsl;
    spec.noise_ratio = noise_ratio;
    const RetrievalReport report = run_retrieval(ck.model, corpus, spec);
    const std::string line = report_json(report, ck.model.cfg.seed, hash);
    if (const auto parent = std::filesystem::path(report_path).parent_path(); !parent.empty())
        std::filesystem::create_directories(parent);
    write_file(report_path, line + "\n");
    std::cout << line << "\n";
    return 0;
}

int run_ablate(const std::string& config_file, const std::string& data_dir,
               const std::string& out_dir) {
    const TrainConfig base = config_from_json_text(read_file(config_file));
    const SyntheticCorpus corpus = load_corpus(corpus_path(data_dir));
    const std::string hash = manifest_hash(corpus);
    std::filesystem::create_directories(out_dir);

    const double on_alpha = base.alpha > 0.0 ? base.alpha : 0.1;
    const ScoreMethod methods[] = {ScoreMethod::t2vparser, ScoreMethod::global_mean,
                                   ScoreMethod::tokenwise_max};
    const EmbeddingVariant variants[] = {EmbeddingVariant::multiview, EmbeddingVariant::global,
                                         EmbeddingVariant::local};
    std::size_t reports = 0;
    for (bool div_on : {true, false}) {
        for (bool doc_on : {true, false}) {
            TrainConfig cfg = base;
            cfg.alpha = div_on ? on_alpha : 0.0;
            cfg.doc_video_training = doc_on;
            const TrainOutput out = train_model(cfg, corpus);
            if (out.aborted)
                throw std::runtime_error(std::string("ablate cell div=") +
                                         (div_on ? "on" : "off") + " doc=" +
                                         (doc_on ? "on" : "off") + " aborted at step " +
                                         std::to_string(out.steps) + " (" + out.abort_reason +
                                         ")");
            for (ScoreMethod method : methods) {
                for (EmbeddingVariant variant : variants) {
                    EvalSpec spec;
                    spec.method = method;
                    spec.variant = variant;
                    const RetrievalReport report = run_retrieval(out.model, corpus, spec);
                    const std::string name = std::string("div") + (div_on ? "on" : "off") +
                                             "_doc" + (doc_on ? "on" : "off") + "_" +
                                             to_string(method) + "_" + to_string(variant) +
                                             ".json";
                    write_file(out_dir + "/" + name,
                               report_json(report, cfg.seed, hash) + "\n");
                    std::cout << "wrote " << out_dir << "/" << name << "\n";
                    reports += 1;
                }
            }
        }
    }
    std::cout << "ablation grid complete, " << reports << " reports\n";
    return 0;
}

}  // namespace

int cli_run(const std::vector<std::string>& args) {
    CLI::App app{"adaptive decomposition token training and retrieval toolkit", "t2v"};
    app.require_subcommand(1);

    std::string spec_file, gen_out;
    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
    gen->add_option("--spec", spec_file, "corpus spec json file")->required();
    gen->add_option("--out", gen_out, "output directory")->required();

    std::string train_config, train_data, train_out;
    CLI::App* train = app.add_subcommand("train", "train a model on a corpus");
    train->add_option("--config", train_config, "train config json file")->required();
    train->add_option("--data", train_data, "corpus directory")->required();
    train->add_option("--out", train_out, "checkpoint output path")->required();

    std::string eval_ckpt, eval_data, eval_method = "t2vparser", eval_report;
    bool eval_dsl = false;
    double eval_noise = 0.0;
    CLI::App* eval = app.add_subcommand("eval", "evaluate retrieval from a checkpoint");
    eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
    eval->add_option("--data", eval_data, "corpus directory")->required();
    eval->add_option("--method", eval_method, "t2vparser|global_mean|tokenwise_max")
        ->check(CLI::IsMember({"t2vparser", "global_mean", "tokenwise_max"}));
    eval->add_flag("--dsl", eval_dsl, "apply dual softmax rescoring");
    eval->add_option("--noise-ratio", eval_noise, "document noise injection ratio")
        ->check(CLI::Range(0.0, 1.0));
    eval->add_option("--report", eval_report, "report output file")->required();

    std::string ab_config, ab_data, ab_out;
    CLI::App* ablate = app.add_subcommand("ablate", "run the pooling/embedding/objective grid");
    ablate->add_option("--config", ab_config, "train config json file")->required();
    ablate->add_option("--data", ab_data, "corpus directory")->required();
    ablate->add_option("--out", ab_out, "report output directory")->required();

    try {
        app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
    }

    try {
        if (gen->parsed()) return run_gen_data(spec_file, gen_out);
        if (train->parsed()) return run_train(train_config, train_data, train_out);
        if (eval->parsed())
            return run_eval(eval_ckpt, eval_data, eval_method, eval_dsl, eval_noise, eval_report);
        return run_ablate(ab_config, ab_data, ab_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace t2v
