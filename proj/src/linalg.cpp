#include "tlsan/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace tlsan::linalg {

Mat softmax_over_positions(const Mat& scores, const std::vector<bool>& mask) {
    if (mask.size() != scores.cols)
        throw std::invalid_argument("softmax: mask length != positions");
    bool any = false;
    for (bool b : mask) any = any || b;
    if (!any) throw std::runtime_error("softmax: all positions masked");

    Mat out(scores.rows, scores.cols);
    for (size_t k = 0; k < scores.rows; ++k) {
        const double* s = scores.row(k);
        double mx = -std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < scores.cols; ++j)
            if (mask[j]) mx = std::max(mx, s[j]);
        double sum = 0.0;
        double* o = out.row(k);
        for (size_t j = 0; j < scores.cols; ++j) {
            o[j] = mask[j] ? std::exp(s[j] - mx) : 0.0;
            sum += o[j];
        }
        for (size_t j = 0; j < scores.cols; ++j) o[j] /= sum;
    }
    return out;
}

Mat init_matrix(Rng& rng, size_t rows, size_t cols, Init scheme) {
    Mat m(rows, cols);
    switch (scheme) {
        case Init::GlorotUniform: {
            double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
            for (auto& v : m.a) v = rng.uniform(-a, a);
            break;
        }
        case Init::EmbeddingUniform: {
            double a = 0.5 / static_cast<double>(cols);
            for (auto& v : m.a) v = rng.uniform(-a, a);
            break;
        }
        case Init::Zeros:
            break;
        case Init::Ones:
            std::fill(m.a.begin(), m.a.end(), 1.0);
            break;
    }
    return m;
}

bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

bool all_finite(const Mat& m) { return all_finite(m.a); }

}  // namespace tlsan::linalg
