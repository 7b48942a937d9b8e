#include "ssmdg/data/task.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ssmdg/data/rng.hpp"

namespace ssmdg::data {

Matrix Matrix::identity(std::size_t n) {
    Matrix m{n, n, std::vector<double>(n * n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

std::vector<double> Matrix::apply(const std::vector<double>& x) const {
    if (x.size() != cols) {
        throw std::invalid_argument("Matrix::apply: vector of length " + std::to_string(x.size()) + " for " +
                                    std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
    }
    std::vector<double> y(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += (*this)(r, c) * x[c];
        y[r] = acc;
    }
    return y;
}

Matrix Matrix::transpose() const {
    Matrix t{cols, rows, std::vector<double>(values.size())};
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix Matrix::operator*(const Matrix& rhs) const {
    if (cols != rhs.rows) throw std::invalid_argument("Matrix product: inner dimensions differ");
    Matrix out{rows, rhs.cols, std::vector<double>(rows * rhs.cols, 0.0)};
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t p = 0; p < cols; ++p) {
            const double a = (*this)(i, p);
            for (std::size_t j = 0; j < rhs.cols; ++j) out(i, j) += a * rhs(p, j);
        }
    return out;
}

void TaskSpec::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("TaskSpec: " + what); };
    if (num_modalities < 2) fail("num_modalities must be >= 2");
    if (num_classes < 2) fail("num_classes must be >= 2");
    if (num_domains < 2) fail("num_domains must be >= 2");
    if (input_dims.size() != num_modalities) {
        fail("input_dims has " + std::to_string(input_dims.size()) + " entries for " +
             std::to_string(num_modalities) + " modalities");
    }
    if (latent_dim == 0) fail("latent_dim must be positive");
    for (auto d : input_dims) {
        if (d == 0) fail("input_dims must be positive");
        if (d < latent_dim) fail("input_dims must be >= latent_dim");
    }
    if (!(class_separation > 0.0)) fail("class_separation must be > 0");
    if (!(domain_shift_scale >= 0.0)) fail("domain_shift_scale must be >= 0");
    if (!(modality_correlation >= 0.0 && modality_correlation <= 1.0)) fail("modality_correlation must lie in [0,1]");
    if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
}

std::vector<std::size_t> SyntheticTask::modality_coordinates(std::size_t m) const {
    std::vector<std::size_t> coords;
    for (std::size_t i = 0; i < shared_dims; ++i) coords.push_back(i);
    for (std::size_t i = 0; i < private_dims; ++i) coords.push_back(shared_dims + m * private_dims + i);
    return coords;
}

std::vector<std::vector<double>> SyntheticTask::render(const std::vector<double>& latent, std::size_t domain) const {
    std::vector<std::vector<double>> inputs(spec.num_modalities);
    for (std::size_t m = 0; m < spec.num_modalities; ++m) {
        std::vector<double> local;
        for (auto c : modality_coordinates(m)) local.push_back(latent[c]);
        auto embedded = mixing[m].apply(local);
        const auto& t = transforms[domain][m];
        auto x = t.linear.apply(embedded);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += t.offset[i];
        inputs[m] = std::move(x);
    }
    return inputs;
}

namespace {

constexpr double kMaxRotation = 0.6;       // radians per Givens step at shift 1
constexpr double kLogScaleSpread = 0.35;   // log singular values in [-s, s] * this
constexpr double kOffsetSigma = 0.5;

// Product of random Givens rotations with angles proportional to `shift`.
Matrix random_rotation(std::size_t n, double shift, Rng& rng) {
    Matrix q = Matrix::identity(n);
    if (n < 2) return q;
    const std::size_t steps = 2 * n;
    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t i = rng.index(n);
        std::size_t j = rng.index(n - 1);
        if (j >= i) ++j;
        const double angle = shift * rng.uniform(-kMaxRotation, kMaxRotation);
        const double c = std::cos(angle), sn = std::sin(angle);
        for (std::size_t col = 0; col < n; ++col) {
            const double a = q(i, col), b = q(j, col);
            q(i, col) = c * a - sn * b;
            q(j, col) = sn * a + c * b;
        }
    }
    return q;
}

Matrix orthonormal_columns(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix w{rows, cols, std::vector<double>(rows * cols)};
    for (auto& v : w.values) v = rng.normal();
    for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t prev = 0; prev < c; ++prev) {
            double dot = 0.0;
            for (std::size_t r = 0; r < rows; ++r) dot += w(r, c) * w(r, prev);
            for (std::size_t r = 0; r < rows; ++r) w(r, c) -= dot * w(r, prev);
        }
        double norm = 0.0;
        for (std::size_t r = 0; r < rows; ++r) norm += w(r, c) * w(r, c);
        norm = std::sqrt(norm);
        for (std::size_t r = 0; r < rows; ++r) w(r, c) /= norm;
    }
    return w;
}

DomainTransform make_transform(std::size_t dim, double shift, Rng& rng) {
    DomainTransform t;
    const Matrix u = random_rotation(dim, shift, rng);
    const Matrix v = random_rotation(dim, shift, rng);
    std::vector<double> log_sv(dim);
    for (auto& g : log_sv) g = shift * rng.uniform(-kLogScaleSpread, kLogScaleSpread);
    // cap the spread so the condition number stays within bounds
    const auto [lo, hi] = std::minmax_element(log_sv.begin(), log_sv.end());
    const double spread = *hi - *lo;
    const double cap = std::log(kMaxConditionNumber);
    if (spread > cap) {
        for (auto& g : log_sv) g *= cap / spread;
    }
    Matrix sigma = Matrix::identity(dim), sigma_inv = Matrix::identity(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        sigma(i, i) = std::exp(log_sv[i]);
        sigma_inv(i, i) = std::exp(-log_sv[i]);
        t.singular_values.push_back(sigma(i, i));
    }
    t.linear = u * sigma * v.transpose();
    t.inverse = v * sigma_inv * u.transpose();
    t.offset.resize(dim);
    for (auto& o : t.offset) o = shift * rng.normal(0.0, kOffsetSigma);
    return t;
}

}  // namespace

double condition_number(const DomainTransform& t) {
    const auto [lo, hi] = std::minmax_element(t.singular_values.begin(), t.singular_values.end());
    return *hi / *lo;
}

SyntheticTask make_task(const TaskSpec& spec) {
    spec.validate();
    SyntheticTask task;
    task.spec = spec;
    task.shared_dims = static_cast<std::size_t>(std::lround(spec.modality_correlation * spec.latent_dim));
    task.private_dims = spec.latent_dim - task.shared_dims;
    const std::size_t full = task.full_latent_dim();

    // Anchors on a sphere of radius class_separation; rejection keeps every
    // pair at least class_separation apart.
    Rng anchor_rng(spec.seed, "anchors");
    std::size_t attempts = 0;
    while (task.anchors.size() < spec.num_classes) {
        if (attempts >= kAnchorAttempts) {
            throw InfeasibleTaskError("cannot place " + std::to_string(spec.num_classes) +
                                      " anchors with separation " + std::to_string(spec.class_separation) +
                                      " in " + std::to_string(full) + " latent dims after " +
                                      std::to_string(attempts) + " attempts");
        }
        ++attempts;
        std::vector<double> candidate(full);
        double norm = 0.0;
        for (auto& v : candidate) {
            v = anchor_rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (auto& v : candidate) v *= spec.class_separation / norm;
        const bool separated = std::all_of(task.anchors.begin(), task.anchors.end(), [&](const auto& other) {
            double d2 = 0.0;
            for (std::size_t i = 0; i < full; ++i) d2 += (candidate[i] - other[i]) * (candidate[i] - other[i]);
            return std::sqrt(d2) >= spec.class_separation;
        });
        if (separated) task.anchors.push_back(std::move(candidate));
    }

    for (std::size_t m = 0; m < spec.num_modalities; ++m) {
        Rng rng(spec.seed, "mixing", m);
        task.mixing.push_back(orthonormal_columns(spec.input_dims[m], spec.latent_dim, rng));
    }

    task.transforms.resize(spec.num_domains);
    for (std::size_t k = 0; k < spec.num_domains; ++k) {
        for (std::size_t m = 0; m < spec.num_modalities; ++m) {
            const std::size_t dim = spec.input_dims[m];
            if (k == 0) {
                task.transforms[k].push_back({Matrix::identity(dim), Matrix::identity(dim),
                                              std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)});
            } else {
                Rng rng(spec.seed, "domain-transform", k, m);
                task.transforms[k].push_back(make_transform(dim, spec.domain_shift_scale, rng));
            }
        }
    }
    return task;
}

}  // namespace ssmdg::data
