#include "tlsan/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace tlsan::io {
namespace {

using nlohmann::json;

constexpr uint16_t kDatasetVersion = 1;
constexpr uint16_t kCheckpointVersion = 1;

void put_bytes(std::ostream& out, const void* p, size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put(std::ostream& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    put_bytes(out, &v, sizeof(v));
}

void get_bytes(std::istream& in, void* p, size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n)
        throw std::runtime_error("truncated file");
}

template <typename T>
T get(std::istream& in) {
    T v;
    get_bytes(in, &v, sizeof(v));
    return v;
}

void put_string(std::ostream& out, const std::string& s) {
    put<uint64_t>(out, s.size());
    put_bytes(out, s.data(), s.size());
}

std::string get_string(std::istream& in) {
    auto n = get<uint64_t>(in);
    if (n > (1ull << 32)) throw std::runtime_error("truncated file");
    std::string s(n, '\0');
    get_bytes(in, s.data(), n);
    return s;
}

void check_magic(std::istream& in, const char* magic) {
    char buf[4];
    get_bytes(in, buf, 4);
    if (std::memcmp(buf, magic, 4) != 0) throw std::runtime_error("bad magic");
}

// write to a temp file, then rename into place
class AtomicFile {
public:
    explicit AtomicFile(const std::string& path)
        : path_(path), tmp_(path + ".tmp"), out_(tmp_, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open " + tmp_);
    }
    std::ostream& stream() { return out_; }
    void commit() {
        out_.flush();
        if (!out_) throw std::runtime_error("write failed: " + tmp_);
        out_.close();
        if (std::rename(tmp_.c_str(), path_.c_str()) != 0)
            throw std::runtime_error("rename failed: " + path_);
    }

private:
    std::string path_, tmp_;
    std::ofstream out_;
};

void put_mat(std::ostream& out, const std::string& name, const Mat& m) {
    put_string(out, name);
    put<uint32_t>(out, 2);
    put<uint64_t>(out, m.rows);
    put<uint64_t>(out, m.cols);
    put_bytes(out, m.a.data(), m.a.size() * sizeof(double));
}

void put_vec(std::ostream& out, const std::string& name, const Vec& v) {
    put_string(out, name);
    put<uint32_t>(out, 1);
    put<uint64_t>(out, v.size());
    put_bytes(out, v.data(), v.size() * sizeof(double));
}

void expect_name(std::istream& in, const std::string& want) {
    std::string got = get_string(in);
    if (got != want)
        throw std::runtime_error("checkpoint: expected tensor " + want +
                                 ", found " + got);
}

Mat get_mat(std::istream& in, const std::string& name, size_t rows, size_t cols) {
    expect_name(in, name);
    if (get<uint32_t>(in) != 2)
        throw std::runtime_error("checkpoint: " + name + " is not a matrix");
    auto r = get<uint64_t>(in);
    auto c = get<uint64_t>(in);
    if (r != rows || c != cols)
        throw std::runtime_error("checkpoint: shape mismatch for " + name);
    Mat m(rows, cols);
    get_bytes(in, m.a.data(), m.a.size() * sizeof(double));
    return m;
}

Vec get_vec(std::istream& in, const std::string& name, size_t len) {
    expect_name(in, name);
    if (get<uint32_t>(in) != 1)
        throw std::runtime_error("checkpoint: " + name + " is not a vector");
    auto n = get<uint64_t>(in);
    if (n != len) throw std::runtime_error("checkpoint: shape mismatch for " + name);
    Vec v(len);
    get_bytes(in, v.data(), v.size() * sizeof(double));
    return v;
}

}  // namespace

void write_dataset(const Dataset& dataset, const std::string& path) {
    AtomicFile f(path);
    auto& out = f.stream();
    put_bytes(out, "TLSD", 4);
    put<uint16_t>(out, kDatasetVersion);

    const auto& m = dataset.manifest;
    json j = {
        {"users", m.n_users},         {"items", m.n_items},
        {"categories", m.n_categories}, {"samples", m.n_samples},
        {"long_seq_len", m.long_seq_len}, {"seed", m.seed},
        {"user_ids", m.user_ids},     {"item_ids", m.item_ids},
        {"category_labels", m.category_labels},
    };
    put_string(out, j.dump());

    put<uint32_t>(out, static_cast<uint32_t>(dataset.histories.size()));
    for (const auto& h : dataset.histories) {
        put<uint32_t>(out, static_cast<uint32_t>(h.sessions.size()));
        for (const auto& s : h.sessions) {
            put<int64_t>(out, s.day);
            put<uint32_t>(out, static_cast<uint32_t>(s.items.size()));
            for (const auto& [item, cat] : s.items) {
                put<uint32_t>(out, item);
                put<uint32_t>(out, cat);
            }
        }
    }
    f.commit();
}

Dataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    check_magic(in, "TLSD");
    auto version = get<uint16_t>(in);
    if (version != kDatasetVersion)
        throw std::runtime_error("dataset version mismatch");

    Dataset d;
    json j = json::parse(get_string(in));
    auto& m = d.manifest;
    m.n_users = j.at("users");
    m.n_items = j.at("items");
    m.n_categories = j.at("categories");
    m.n_samples = j.at("samples");
    m.long_seq_len = j.at("long_seq_len");
    m.seed = j.at("seed");
    m.user_ids = j.at("user_ids").get<std::vector<std::string>>();
    m.item_ids = j.at("item_ids").get<std::vector<std::string>>();
    m.category_labels = j.at("category_labels").get<std::vector<std::string>>();

    auto n_users = get<uint32_t>(in);
    if (n_users != m.n_users)
        throw std::runtime_error("dataset: user count disagrees with manifest");
    d.histories.resize(n_users);
    for (uint32_t u = 0; u < n_users; ++u) {
        auto& h = d.histories[u];
        h.user = u;
        auto n_sessions = get<uint32_t>(in);
        h.sessions.resize(n_sessions);
        for (auto& s : h.sessions) {
            s.day = get<int64_t>(in);
            auto n_items = get<uint32_t>(in);
            s.items.resize(n_items);
            for (auto& [item, cat] : s.items) {
                item = get<uint32_t>(in);
                cat = get<uint32_t>(in);
            }
        }
    }
    return d;
}

void dump_dataset_tsv(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "user\tsplit\tuser_category\ttarget\tlong_items\tshort_items\n";
    Rng rng(dataset.manifest.seed);
    for (const auto& h : dataset.histories) {
        auto pair = ingest::build_examples(h, dataset.manifest.long_seq_len, rng);
        for (const auto* exp : {&pair.train, &pair.test}) {
            if (!exp->has_value()) continue;
            const Example& e = **exp;
            out << e.user << '\t' << (e.is_test ? "test" : "train") << '\t'
                << e.user_category << '\t' << e.target << '\t';
            for (size_t i = 0; i < e.long_items.size(); ++i) {
                if (i) out << ',';
                out << e.long_items[i].item << ':' << e.long_items[i].category
                    << ':' << e.long_items[i].day_delta;
            }
            out << '\t';
            for (size_t i = 0; i < e.short_items.size(); ++i) {
                if (i) out << ',';
                out << e.short_items[i].first << ':' << e.short_items[i].second;
            }
            out << '\n';
        }
    }
}

void write_checkpoint(const ModelParams& p, const std::string& path) {
    AtomicFile f(path);
    auto& out = f.stream();
    put_bytes(out, "TLSC", 4);
    put<uint16_t>(out, kCheckpointVersion);
    put<uint32_t>(out, p.hyper.d_f);
    put<uint32_t>(out, p.hyper.long_seq_len);
    put<uint32_t>(out, p.hyper.heads);
    put<uint32_t>(out, p.hyper.n_users);
    put<uint32_t>(out, p.hyper.n_items);
    put<uint32_t>(out, p.hyper.n_categories);

    put_mat(out, "user_emb", p.user_emb);
    put_mat(out, "item_emb", p.item_emb);
    put_mat(out, "cat_emb", p.cat_emb);
    put_mat(out, "pos_weight", p.pos_weight);
    put_vec(out, "gamma", Vec{p.gamma});
    put_mat(out, "w1", p.w1);
    put_mat(out, "w2", p.w2);
    put_mat(out, "w3", p.w3);
    put_mat(out, "w4", p.w4);
    put_vec(out, "b1", p.b1);
    put_vec(out, "b2", p.b2);
    put_vec(out, "b3", p.b3);
    put_vec(out, "b4", p.b4);
    f.commit();
}

ModelParams read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    check_magic(in, "TLSC");
    auto version = get<uint16_t>(in);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint version mismatch");

    ModelParams p;
    p.hyper.d_f = get<uint32_t>(in);
    p.hyper.long_seq_len = get<uint32_t>(in);
    p.hyper.heads = get<uint32_t>(in);
    p.hyper.n_users = get<uint32_t>(in);
    p.hyper.n_items = get<uint32_t>(in);
    p.hyper.n_categories = get<uint32_t>(in);
    p.hyper.validate();

    uint32_t d = p.hyper.emb_dim();
    p.user_emb = get_mat(in, "user_emb", p.hyper.n_users, p.hyper.d_f);
    p.item_emb = get_mat(in, "item_emb", p.hyper.n_items, p.hyper.d_f);
    p.cat_emb = get_mat(in, "cat_emb", p.hyper.n_categories, p.hyper.d_f);
    p.pos_weight = get_mat(in, "pos_weight", p.hyper.n_users, p.hyper.long_seq_len);
    p.gamma = get_vec(in, "gamma", 1)[0];
    p.w1 = get_mat(in, "w1", d, d);
    p.w2 = get_mat(in, "w2", d, d);
    p.w3 = get_mat(in, "w3", d, d);
    p.w4 = get_mat(in, "w4", d, d);
    p.b1 = get_vec(in, "b1", d);
    p.b2 = get_vec(in, "b2", d);
    p.b3 = get_vec(in, "b3", d);
    p.b4 = get_vec(in, "b4", d);
    return p;
}

}  // namespace tlsan::io
