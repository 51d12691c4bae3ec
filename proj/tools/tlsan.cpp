// tlsan: command-line front end for the preprocessing, training, evaluation
// and recommendation pipeline.

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tlsan/eval.hpp"
#include "tlsan/ingest.hpp"
#include "tlsan/io.hpp"
#include "tlsan/kernels.hpp"
#include "tlsan/model.hpp"
#include "tlsan/synth.hpp"
#include "tlsan/train.hpp"

namespace {

bool log_enabled() {
    const char* v = std::getenv("TLSAN_LOG");
    return v != nullptr && *v != '\0' && std::string(v) != "0";
}

void log_line(const std::string& msg) {
    if (log_enabled()) std::cerr << "[tlsan] " << msg << "\n";
}

std::vector<uint32_t> parse_ks(const std::string& s) {
    std::vector<uint32_t> ks;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) ks.push_back(static_cast<uint32_t>(std::stoul(tok)));
    if (ks.empty()) throw CLI::ValidationError("--ks", "no cutoffs given");
    return ks;
}

tlsan::Ablation parse_ablation(const std::string& s) {
    if (s == "full") return tlsan::Ablation::Full;
    if (s == "ns") return tlsan::Ablation::NoShort;
    if (s == "ng") return tlsan::Ablation::NoGamma;
    throw CLI::ValidationError("--ablation", "expected full, ns or ng");
}

void print_eval(const tlsan::EvalReport& rep, const std::string& label) {
    std::cout << label << ": AUC " << std::setprecision(6) << rep.auc << " ("
              << rep.user_count << " users)\n";
    std::cout << std::left << std::setw(8) << "K" << std::setw(14)
              << "Precision@K" << std::setw(14) << "Recall@K" << "\n";
    for (size_t i = 0; i < rep.ks.size(); ++i)
        std::cout << std::left << std::setw(8) << rep.ks[i] << std::setw(14)
                  << rep.precision_at_k[i] << std::setw(14)
                  << rep.recall_at_k[i] << "\n";
}

void write_eval_csv(const tlsan::EvalReport& rep, const std::string& label,
                    std::ostream& out) {
    out << "model,k,auc,precision,recall\n";
    for (size_t i = 0; i < rep.ks.size(); ++i)
        out << label << ',' << rep.ks[i] << ',' << rep.auc << ','
            << rep.precision_at_k[i] << ',' << rep.recall_at_k[i] << "\n";
}

// Inference-time example for a user: the whole newest session is the
// short-term context and the preceding sessions supply the long-term items.
tlsan::Example inference_example(const tlsan::UserHistory& history,
                                 uint32_t long_seq_len) {
    if (history.sessions.empty())
        throw std::invalid_argument("recommend: user has no sessions");
    size_t anchor = history.sessions.size() - 1;
    tlsan::Example ex;
    ex.user = history.user;
    ex.user_category = tlsan::ingest::extract_user_category(history, anchor);
    ex.short_items = history.sessions[anchor].items;
    int64_t anchor_day = history.sessions[anchor].day;
    std::vector<tlsan::Example::LongItem> rev;
    for (size_t s = anchor; s-- > 0 && rev.size() < long_seq_len;)
        for (size_t i = history.sessions[s].items.size();
             i-- > 0 && rev.size() < long_seq_len;) {
            auto [item, cat] = history.sessions[s].items[i];
            rev.push_back({item, cat, anchor_day - history.sessions[s].day});
        }
    ex.long_items.assign(rev.rbegin(), rev.rend());
    return ex;
}

int run_prep(const std::string& reviews_path, const std::string& meta_path,
             const std::string& out_path, const std::string& tsv_path,
             uint32_t long_seq_len, uint64_t seed) {
    std::ifstream rf(reviews_path);
    if (!rf) throw std::runtime_error("cannot open " + reviews_path);
    auto parsed = tlsan::ingest::parse_reviews(rf);
    log_line("parsed " + std::to_string(parsed.reviews.size()) + " reviews, " +
             std::to_string(parsed.skipped) + " skipped");

    std::map<std::string, std::string> cats;
    if (!meta_path.empty()) {
        std::ifstream mf(meta_path);
        if (!mf) throw std::runtime_error("cannot open " + meta_path);
        cats = tlsan::ingest::parse_categories(mf);
    }

    tlsan::ingest::FilterStats stats;
    auto filtered = tlsan::ingest::filter_dataset(parsed.reviews, cats,
                                                  long_seq_len, seed, &stats);
    tlsan::Dataset ds;
    ds.manifest = filtered.manifest;
    ds.histories =
        tlsan::ingest::sessionize(filtered.interactions, ds.manifest.n_users);
    tlsan::io::write_dataset(ds, out_path);
    if (!tsv_path.empty()) tlsan::io::dump_dataset_tsv(ds, tsv_path);

    const auto& m = ds.manifest;
    std::cout << "dataset summary\n"
              << "  users           " << m.n_users << "\n"
              << "  items           " << m.n_items << "\n"
              << "  categories      " << m.n_categories << "\n"
              << "  samples         " << m.n_samples << "\n"
              << "  samples/user    "
              << (m.n_users ? static_cast<double>(m.n_samples) / m.n_users : 0.0)
              << "\n"
              << "  dropped (user<10)  " << stats.removed_users_min_interactions
              << "\n"
              << "  dropped (item<8)   " << stats.removed_items_min_interactions
              << "\n"
              << "  dropped (4<n<90)   " << stats.removed_users_count_bound
              << "\n"
              << "  written to      " << out_path << "\n";
    return 0;
}

int run_train(const std::string& data_path, const std::string& ckpt_path,
              const std::string& metrics_path, tlsan::TrainConfig cfg,
              uint32_t eval_every, uint64_t eval_seed,
              const std::string& ks_str) {
    auto ds = tlsan::io::read_dataset(data_path);
    cfg.long_seq_len = ds.manifest.long_seq_len;
    cfg.validate();

    tlsan::HyperParams hyper;
    hyper.d_f = cfg.d_f;
    hyper.heads = cfg.heads;
    hyper.long_seq_len = cfg.long_seq_len;
    hyper.n_users = ds.manifest.n_users;
    hyper.n_items = ds.manifest.n_items;
    hyper.n_categories = ds.manifest.n_categories;
    tlsan::Rng rng(cfg.seed);
    auto params = tlsan::ModelParams::init(hyper, rng);
    log_line("kernels: " + std::string(tlsan::kernels::active().name));

    auto ks = parse_ks(ks_str);
    std::ofstream mf;
    if (!metrics_path.empty()) {
        mf.open(metrics_path);
        if (!mf) throw std::runtime_error("cannot open " + metrics_path);
        mf << "step,epoch,lr,loss,auc,p_at_k,r_at_k\n";
    }
    tlsan::train::EvalHook hook = [&](uint64_t step, uint32_t epoch, double lr,
                                      double mean_loss,
                                      const tlsan::ModelParams& p) {
        std::string auc_s, p_s, r_s;
        if (eval_every > 0 && step % eval_every == 0) {
            auto rep = tlsan::eval::evaluate(ds, p, ks, eval_seed, cfg.ablation);
            auc_s = std::to_string(rep.auc);
            p_s = std::to_string(rep.precision_at_k.back());
            r_s = std::to_string(rep.recall_at_k.back());
            log_line("step " + std::to_string(step) + " auc " + auc_s);
        }
        if (mf.is_open())
            mf << step << ',' << epoch << ',' << lr << ',' << mean_loss << ','
               << auc_s << ',' << p_s << ',' << r_s << "\n";
    };

    auto report = tlsan::train::train_loop(ds, cfg, params, ckpt_path, hook);
    std::cout << "training done: " << report.total_steps << " steps, final loss "
              << report.final_loss << "\n";
    if (!report.checkpoint_path.empty())
        std::cout << "checkpoint written to " << report.checkpoint_path << "\n";
    return 0;
}

int run_eval(const std::string& data_path, const std::string& ckpt_path,
             const std::string& ks_str, uint64_t seed, bool popularity,
             const std::string& csv_path, tlsan::Ablation ablation) {
    auto ds = tlsan::io::read_dataset(data_path);
    auto ks = parse_ks(ks_str);
    auto params = tlsan::io::read_checkpoint(ckpt_path);
    auto rep = tlsan::eval::evaluate(ds, params, ks, seed, ablation);
    print_eval(rep, "model");
    if (popularity) {
        auto base = tlsan::eval::evaluate_popularity(ds, ks, seed);
        print_eval(base, "popularity");
    }
    if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        if (!out) throw std::runtime_error("cannot open " + csv_path);
        write_eval_csv(rep, "model", out);
    }
    return 0;
}

int run_recommend(const std::string& data_path, const std::string& ckpt_path,
                  const std::string& user_ext, uint32_t k) {
    auto ds = tlsan::io::read_dataset(data_path);
    auto params = tlsan::io::read_checkpoint(ckpt_path);
    auto it = std::find(ds.manifest.user_ids.begin(), ds.manifest.user_ids.end(),
                        user_ext);
    if (it == ds.manifest.user_ids.end())
        throw std::runtime_error("unknown user id: " + user_ext);
    auto uid = static_cast<uint32_t>(it - ds.manifest.user_ids.begin());

    auto ex = inference_example(ds.histories[uid], ds.manifest.long_seq_len);
    auto cache = tlsan::model::forward(ex, params, {});
    auto icat = tlsan::eval::item_categories(ds);
    std::vector<uint32_t> excl;
    for (const auto& [item, cat] : ex.short_items) excl.push_back(item);
    auto top = tlsan::eval::rank_catalog(cache.u_t, icat, params, excl, k);
    for (uint32_t item : top)
        std::cout << ds.manifest.item_ids[item] << '\t'
                  << tlsan::model::score(cache.u_t, item, icat[item], params)
                  << "\n";
    return 0;
}

int run_gradcheck(uint32_t d_f, uint32_t long_seq_len, uint32_t heads,
                  uint64_t seed) {
    tlsan::HyperParams hyper;
    hyper.d_f = d_f;
    hyper.long_seq_len = long_seq_len;
    hyper.heads = heads;
    auto rep = tlsan::train::grad_check(hyper, seed);
    for (const auto& [name, err] : rep.per_tensor)
        std::cout << std::left << std::setw(12) << name << std::scientific
                  << err << std::defaultfloat << "\n";
    std::cout << "max relative error " << std::scientific << rep.max_error
              << std::defaultfloat << (rep.passed() ? "  PASS" : "  FAIL")
              << "\n";
    return rep.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"time-aware long- and short-term attention recommender"};
    app.set_config("--config", "", "key=value configuration file");
    app.require_subcommand(1);

    // prep
    std::string reviews_path, meta_path, out_path, tsv_path;
    uint32_t long_seq_len = 10;
    uint64_t seed = 42;
    auto* prep = app.add_subcommand("prep", "preprocess raw review logs");
    prep->add_option("--reviews", reviews_path, "review JSON-lines file")
        ->required();
    prep->add_option("--meta", meta_path, "item metadata JSON-lines file");
    prep->add_option("--out", out_path, "output dataset file")->required();
    prep->add_option("--tsv", tsv_path, "optional human-readable dump");
    prep->add_option("--ls", long_seq_len, "long-term sequence length");
    prep->add_option("--seed", seed, "dataset seed");

    // synth
    tlsan::SynthSpec sspec;
    std::string synth_reviews = "reviews.json", synth_meta = "meta.json";
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--users", sspec.n_users, "number of users");
    synth->add_option("--items", sspec.n_items, "number of items");
    synth->add_option("--categories", sspec.n_categories, "number of categories");
    synth->add_option("--days", sspec.days, "span of the log in days");
    synth->add_option("--affinity", sspec.long_affinity_strength,
                      "long-term category affinity");
    synth->add_option("--drift", sspec.recent_drift_probability,
                      "probability of a recent category drift");
    synth->add_option("--seed", sspec.seed, "generator seed");
    synth->add_option("--reviews", synth_reviews, "output review file");
    synth->add_option("--meta", synth_meta, "output metadata file");

    // train
    std::string data_path, ckpt_path = "model.ckpt", metrics_path;
    std::string ablation_str = "full", ks_str = "1,5,10,20";
    tlsan::TrainConfig cfg;
    uint32_t eval_every = 0;
    uint64_t eval_seed = 7;
    auto* train = app.add_subcommand("train", "train a model");
    train->add_option("--data", data_path, "dataset file")->required();
    train->add_option("--checkpoint", ckpt_path, "checkpoint output path");
    train->add_option("--metrics", metrics_path, "per-step metrics CSV");
    train->add_option("--df", cfg.d_f, "feature dimension");
    train->add_option("--heads", cfg.heads, "attention heads");
    train->add_option("--batch", cfg.batch, "minibatch size");
    train->add_option("--l2", cfg.l2, "L2 penalty");
    train->add_option("--epochs", cfg.epochs, "training epochs");
    train->add_option("--seed", cfg.seed, "training seed");
    train->add_option("--lr", cfg.lr_initial, "initial learning rate");
    train->add_option("--lr-after", cfg.lr_after, "learning rate after the drop");
    train->add_option("--lr-drop", cfg.lr_drop_fraction,
                      "fraction of steps before the drop");
    train->add_option("--negatives", cfg.negatives_per_positive,
                      "negatives per positive");
    train->add_option("--ablation", ablation_str, "full, ns or ng");
    train->add_option("--eval-every", eval_every,
                      "evaluate every N steps (0 = never)");
    train->add_option("--eval-seed", eval_seed, "evaluation seed");
    train->add_option("--ks", ks_str, "comma-separated ranking cutoffs");

    // eval
    std::string eval_data, eval_ckpt, eval_csv;
    std::string eval_ks = "1,5,10,20", eval_ablation = "full";
    uint64_t eval_seed2 = 7;
    bool popularity = false;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    ev->add_option("--data", eval_data, "dataset file")->required();
    ev->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    ev->add_option("--ks", eval_ks, "comma-separated ranking cutoffs");
    ev->add_option("--seed", eval_seed2, "evaluation seed");
    ev->add_option("--csv", eval_csv, "optional metrics CSV output");
    ev->add_option("--ablation", eval_ablation, "full, ns or ng");
    ev->add_flag("--popularity", popularity, "also report the popularity baseline");

    // recommend
    std::string rec_data, rec_ckpt, rec_user;
    uint32_t rec_k = 10;
    auto* rec = app.add_subcommand("recommend", "top-K items for one user");
    rec->add_option("--data", rec_data, "dataset file")->required();
    rec->add_option("--checkpoint", rec_ckpt, "checkpoint file")->required();
    rec->add_option("--user", rec_user, "external user id")->required();
    rec->add_option("--k", rec_k, "list length");

    // gradcheck
    uint32_t gc_df = 4, gc_ls = 3, gc_heads = 2;
    uint64_t gc_seed = 1;
    auto* gc = app.add_subcommand("gradcheck",
                                  "finite-difference gradient verification");
    gc->add_option("--df", gc_df, "feature dimension");
    gc->add_option("--ls", gc_ls, "long-term sequence length");
    gc->add_option("--heads", gc_heads, "attention heads");
    gc->add_option("--seed", gc_seed, "instance seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (prep->parsed())
            return run_prep(reviews_path, meta_path, out_path, tsv_path,
                            long_seq_len, seed);
        if (synth->parsed()) {
            tlsan::synth::generate_synthetic(sspec, synth_reviews, synth_meta);
            std::cout << "wrote " << synth_reviews << " and " << synth_meta
                      << "\n";
            return 0;
        }
        if (train->parsed()) {
            cfg.ablation = parse_ablation(ablation_str);
            return run_train(data_path, ckpt_path, metrics_path, cfg,
                             eval_every, eval_seed, ks_str);
        }
        if (ev->parsed())
            return run_eval(eval_data, eval_ckpt, eval_ks, eval_seed2,
                            popularity, eval_csv, parse_ablation(eval_ablation));
        if (rec->parsed()) return run_recommend(rec_data, rec_ckpt, rec_user, rec_k);
        if (gc->parsed()) return run_gradcheck(gc_df, gc_ls, gc_heads, gc_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
