#include "eventcast/spectral_flow.hpp"

#include <fftw3.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <mutex>
#include <numbers>
#include <random>

#include "eventcast/rng.hpp"

namespace eventcast {

namespace {

using cd = std::complex<double>;
constexpr double two_pi = 2.0 * std::numbers::pi;

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

std::optional<std::filesystem::path>& wisdom_file() {
    static std::optional<std::filesystem::path> path;
    return path;
}

int wrap_kx(int i, int n) { return i <= n / 2 ? i : i - n; }

// Weight of column ky in a sum over the full (conjugate-symmetric) spectrum.
double column_weight(int ky, int n) { return (ky == 0 || 2 * ky == n) ? 1.0 : 2.0; }

template <typename T>
struct FftwDeleter {
    void operator()(T* p) const { fftw_free(p); }
};
template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwDeleter<T>>;

FftwBuffer<double> alloc_real(std::size_t n) { return FftwBuffer<double>(fftw_alloc_real(n)); }
FftwBuffer<fftw_complex> alloc_complex(std::size_t n) {
    return FftwBuffer<fftw_complex>(fftw_alloc_complex(n));
}

}  // namespace

void set_fft_wisdom_file(std::optional<std::filesystem::path> path) {
    std::lock_guard lock(planner_mutex());
    wisdom_file() = std::move(path);
}

std::vector<Point2> default_probe_points() {
    constexpr double pi = std::numbers::pi;
    const double coords[3] = {pi / 3.0, pi, 5.0 * pi / 3.0};
    std::vector<Point2> pts;
    for (double x : coords)
        for (double y : coords) pts.push_back({x, y});
    return pts;
}

long long FlowParams::steps_per_sample() const {
    const double ratio = dt_sample / dt_solver;
    const auto steps = std::llround(ratio);
    if (steps < 1 || std::abs(ratio - static_cast<double>(steps)) > 1e-9 * ratio) {
        throw ConfigError("FlowParams: dt_sample must be an integer multiple of dt_solver");
    }
    return steps;
}

void FlowParams::validate() const {
    if (grid < 8 || (grid & (grid - 1)) != 0) throw ConfigError("FlowParams: grid must be a power of two >= 8");
    if (!(reynolds > 0.0)) throw ConfigError("FlowParams: reynolds must be positive");
    if (forcing_wavenumber < 1 || forcing_wavenumber > band_limit()) {
        throw ConfigError("FlowParams: forcing wavenumber outside the dealiased band");
    }
    if (!(dt_solver > 0.0) || !(dt_sample > 0.0) || discard < 0.0) {
        throw ConfigError("FlowParams: time steps must be positive");
    }
    steps_per_sample();
}

struct KolmogorovSolver::Impl {
    FlowParams p;
    int n = 0;      // grid points per dimension
    int h = 0;      // n/2 + 1 retained ky columns
    int band = 0;   // 2/3-rule cut-off

    std::vector<double> kx, k2, inv_k2;
    std::vector<unsigned char> keep;  // dealias mask over the half spectrum

    FftwBuffer<fftw_complex> spec[5];
    FftwBuffer<double> real[5];

    fftw_plan row_inv = nullptr, row_fwd = nullptr;
    fftw_plan col_inv_band = nullptr, col_fwd_band = nullptr;
    fftw_plan col_inv_full = nullptr, col_fwd_full = nullptr;

    SpectralField s1, s2, s3, s4, stage;

    explicit Impl(FlowParams params) : p(params) {
        p.validate();
        n = p.grid;
        h = n / 2 + 1;
        band = p.band_limit();
        const auto count = static_cast<std::size_t>(n) * h;
        kx.resize(count);
        k2.resize(count);
        inv_k2.resize(count);
        keep.resize(count);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < h; ++j) {
                const auto idx = static_cast<std::size_t>(i) * h + j;
                const int kxi = wrap_kx(i, n);
                kx[idx] = kxi;
                k2[idx] = static_cast<double>(kxi * kxi + j * j);
                inv_k2[idx] = k2[idx] > 0.0 ? 1.0 / k2[idx] : 0.0;
                keep[idx] = (std::abs(kxi) <= band && j <= band && k2[idx] > 0.0) ? 1 : 0;
            }
        }
        for (auto& b : spec) b = alloc_complex(count);
        for (auto& b : real) b = alloc_real(static_cast<std::size_t>(n) * n);

        std::lock_guard lock(planner_mutex());
        unsigned flags = FFTW_ESTIMATE;
        const auto& wisdom = wisdom_file();
        if (wisdom) {
            if (std::filesystem::exists(*wisdom)) fftw_import_wisdom_from_filename(wisdom->string().c_str());
            flags = FFTW_MEASURE;
        }
        int len[1] = {n};
        fftw_complex* c = spec[0].get();
        double* r = real[0].get();
        row_inv = fftw_plan_many_dft_c2r(1, len, n, c, nullptr, 1, h, r, nullptr, 1, n, flags);
        row_fwd = fftw_plan_many_dft_r2c(1, len, n, r, nullptr, 1, n, c, nullptr, 1, h, flags);
        col_inv_band = fftw_plan_many_dft(1, len, band + 1, c, nullptr, h, 1, c, nullptr, h, 1, FFTW_BACKWARD, flags);
        col_fwd_band = fftw_plan_many_dft(1, len, band + 1, c, nullptr, h, 1, c, nullptr, h, 1, FFTW_FORWARD, flags);
        col_inv_full = fftw_plan_many_dft(1, len, h, c, nullptr, h, 1, c, nullptr, h, 1, FFTW_BACKWARD, flags);
        col_fwd_full = fftw_plan_many_dft(1, len, h, c, nullptr, h, 1, c, nullptr, h, 1, FFTW_FORWARD, flags);
        if (!row_inv || !row_fwd || !col_inv_band || !col_fwd_band || !col_inv_full || !col_fwd_full) {
            throw Error("KolmogorovSolver: FFT planning failed");
        }
        if (wisdom) {
            if (wisdom->has_parent_path()) std::filesystem::create_directories(wisdom->parent_path());
            fftw_export_wisdom_to_filename(wisdom->string().c_str());
        }
    }

    ~Impl() {
        std::lock_guard lock(planner_mutex());
        for (fftw_plan plan : {row_inv, row_fwd, col_inv_band, col_fwd_band, col_inv_full, col_fwd_full}) {
            if (plan) fftw_destroy_plan(plan);
        }
    }

    std::size_t count() const { return static_cast<std::size_t>(n) * h; }

    // spec buffer -> real buffer; the spectrum buffer is clobbered.
    void inverse(fftw_complex* c, double* r, bool band_limited) {
        if (band_limited) {
            for (int i = 0; i < n; ++i) {
                fftw_complex* row = c + static_cast<std::size_t>(i) * h;
                for (int j = band + 1; j < h; ++j) row[j][0] = row[j][1] = 0.0;
            }
        }
        fftw_execute_dft(band_limited ? col_inv_band : col_inv_full, c, c);
        fftw_execute_dft_c2r(row_inv, c, r);
    }

    // real buffer -> normalized coefficients in spec buffer (columns > band skipped when band_limited).
    void forward(double* r, fftw_complex* c, bool band_limited) {
        fftw_execute_dft_r2c(row_fwd, r, c);
        fftw_execute_dft(band_limited ? col_fwd_band : col_fwd_full, c, c);
    }

    void tendency(const SpectralField& w, SpectralField& out, double* max_speed) {
        if (w.rows() != n || w.cols() != h) throw ShapeError("KolmogorovSolver: spectrum shape mismatch");
        const cd* wp = w.data();
        auto* cu = reinterpret_cast<cd*>(spec[0].get());
        auto* cv = reinterpret_cast<cd*>(spec[1].get());
        auto* cwx = reinterpret_cast<cd*>(spec[2].get());
        auto* cwy = reinterpret_cast<cd*>(spec[3].get());
        const cd I(0.0, 1.0);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < h; ++j) {
                const auto idx = static_cast<std::size_t>(i) * h + j;
                if (!keep[idx]) {
                    cu[idx] = cv[idx] = cwx[idx] = cwy[idx] = 0.0;
                    continue;
                }
                const cd wk = wp[idx];
                const cd psi = wk * inv_k2[idx];
                const double ky = j;
                cu[idx] = I * ky * psi;
                cv[idx] = -I * kx[idx] * psi;
                cwx[idx] = I * kx[idx] * wk;
                cwy[idx] = I * ky * wk;
            }
        }
        for (int b = 0; b < 4; ++b) inverse(spec[b].get(), real[b].get(), true);

        const double* u = real[0].get();
        const double* v = real[1].get();
        const double* wx = real[2].get();
        const double* wy = real[3].get();
        double* adv = real[4].get();
        const std::size_t npts = static_cast<std::size_t>(n) * n;
        double umax = 0.0;
        for (std::size_t q = 0; q < npts; ++q) {
            adv[q] = u[q] * wx[q] + v[q] * wy[q];
            umax = std::max(umax, std::max(std::abs(u[q]), std::abs(v[q])));
        }
        if (max_speed) *max_speed = umax;
        forward(adv, spec[4].get(), true);

        out.resize(n, h);
        const auto* ca = reinterpret_cast<const cd*>(spec[4].get());
        cd* op = out.data();
        const double norm = 1.0 / static_cast<double>(npts);
        const double nu = p.viscosity();
        const int nf = p.forcing_wavenumber;
        for (std::size_t idx = 0; idx < count(); ++idx) {
            op[idx] = keep[idx] ? -ca[idx] * norm - nu * k2[idx] * wp[idx] : cd(0.0);
        }
        // curl of sin(n y) e_x is -n cos(n y)
        out(0, nf) += cd(-0.5 * nf, 0.0);
        if (!out.allFinite()) throw DivergenceError("KolmogorovSolver: non-finite tendency");
    }

    void enforce(SpectralField& hat) const {
        cd* hp = hat.data();
        for (std::size_t idx = 0; idx < count(); ++idx) {
            if (!keep[idx]) hp[idx] = 0.0;
        }
        for (int i = 1; i < n / 2; ++i) {
            const cd avg = 0.5 * (hat(i, 0) + std::conj(hat(n - i, 0)));
            hat(i, 0) = avg;
            hat(n - i, 0) = std::conj(avg);
        }
        hat(0, 0) = 0.0;
    }
};

KolmogorovSolver::KolmogorovSolver(FlowParams params) : impl_(std::make_unique<Impl>(params)) {}
KolmogorovSolver::~KolmogorovSolver() = default;
KolmogorovSolver::KolmogorovSolver(KolmogorovSolver&&) noexcept = default;
KolmogorovSolver& KolmogorovSolver::operator=(KolmogorovSolver&&) noexcept = default;

const FlowParams& KolmogorovSolver::params() const { return impl_->p; }

void KolmogorovSolver::tendency(const SpectralField& omega_hat, SpectralField& out, double* max_speed) {
    impl_->tendency(omega_hat, out, max_speed);
}

void KolmogorovSolver::step(FlowSnapshot& snap) {
    auto& m = *impl_;
    const double dt = m.p.dt_solver;
    double umax = 0.0;
    m.tendency(snap.omega_hat, m.s1, &umax);
    const double cfl = umax * dt / (two_pi / m.n);
    if (cfl > m.p.cfl_limit) {
        throw StepRejected("KolmogorovSolver: CFL " + std::to_string(cfl) + " exceeds limit at t=" +
                               std::to_string(snap.time),
                           cfl);
    }
    m.stage = snap.omega_hat + (0.5 * dt) * m.s1;
    m.tendency(m.stage, m.s2, nullptr);
    m.stage = snap.omega_hat + (0.5 * dt) * m.s2;
    m.tendency(m.stage, m.s3, nullptr);
    m.stage = snap.omega_hat + dt * m.s3;
    m.tendency(m.stage, m.s4, nullptr);
    snap.omega_hat += (dt / 6.0) * (m.s1 + 2.0 * m.s2 + 2.0 * m.s3 + m.s4);
    m.enforce(snap.omega_hat);
    if (!snap.omega_hat.allFinite()) throw DivergenceError("KolmogorovSolver: non-finite vorticity");
    snap.time += dt;
}

RowMatrixXd KolmogorovSolver::to_grid(const SpectralField& hat) {
    auto& m = *impl_;
    if (hat.rows() != m.n || hat.cols() != m.h) throw ShapeError("to_grid: spectrum shape mismatch");
    std::copy(hat.data(), hat.data() + m.count(), reinterpret_cast<cd*>(m.spec[0].get()));
    m.inverse(m.spec[0].get(), m.real[0].get(), false);
    return Eigen::Map<RowMatrixXd>(m.real[0].get(), m.n, m.n);
}

SpectralField KolmogorovSolver::from_grid(const RowMatrixXd& grid) {
    auto& m = *impl_;
    if (grid.rows() != m.n || grid.cols() != m.n) throw ShapeError("from_grid: grid shape mismatch");
    std::copy(grid.data(), grid.data() + grid.size(), m.real[0].get());
    m.forward(m.real[0].get(), m.spec[0].get(), false);
    SpectralField out = Eigen::Map<SpectralField>(reinterpret_cast<cd*>(m.spec[0].get()), m.n, m.h);
    out /= static_cast<double>(m.n) * m.n;
    return out;
}

std::pair<RowMatrixXd, RowMatrixXd> KolmogorovSolver::velocity(const SpectralField& w) {
    auto& m = *impl_;
    SpectralField uh(m.n, m.h), vh(m.n, m.h);
    const cd I(0.0, 1.0);
    for (int i = 0; i < m.n; ++i) {
        for (int j = 0; j < m.h; ++j) {
            const auto idx = static_cast<std::size_t>(i) * m.h + j;
            const cd psi = w(i, j) * m.inv_k2[idx];
            uh(i, j) = I * static_cast<double>(j) * psi;
            vh(i, j) = -I * m.kx[idx] * psi;
        }
    }
    return {to_grid(uh), to_grid(vh)};
}

void KolmogorovSolver::enforce_invariants(SpectralField& hat) const { impl_->enforce(hat); }

SpectralField KolmogorovSolver::laminar() const {
    const auto& m = *impl_;
    SpectralField hat = SpectralField::Zero(m.n, m.h);
    const int nf = m.p.forcing_wavenumber;
    // omega = -(Re / n) cos(n y)
    hat(0, nf) = cd(-0.5 * m.p.reynolds / nf, 0.0);
    return hat;
}

SpectralField KolmogorovSolver::random_initial(std::uint64_t seed) const {
    const auto& m = *impl_;
    constexpr int kmax = 8;
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    SpectralField hat = SpectralField::Zero(m.n, m.h);
    for (int i = 0; i < m.n; ++i) {
        const int kxi = wrap_kx(i, m.n);
        for (int j = 0; j <= std::min(kmax, m.band); ++j) {
            const double kk = std::sqrt(static_cast<double>(kxi * kxi + j * j));
            if (kk < 1.0 || kk > kmax || (j == 0 && kxi <= 0)) continue;
            const double re = normal(rng);
            const double im = normal(rng);
            hat(i, j) = cd(re, im) / (kk * kk);
        }
    }
    for (int i = 1; i < m.n / 2; ++i) hat(m.n - i, 0) = std::conj(hat(i, 0));
    m.enforce(hat);

    // Unit enstrophy: (1/2) <omega^2> = 1.
    double sum = 0.0;
    for (int i = 0; i < m.n; ++i)
        for (int j = 0; j < m.h; ++j) sum += column_weight(j, m.n) * std::norm(hat(i, j));
    hat *= std::sqrt(2.0 / sum);
    return hat;
}

SpectralField vorticity_rhs(const FlowSnapshot& snap, const FlowParams& params) {
    KolmogorovSolver solver(params);
    SpectralField out;
    solver.tendency(snap.omega_hat, out);
    return out;
}

FlowSnapshot step_rk4(const FlowSnapshot& snap, const FlowParams& params) {
    KolmogorovSolver solver(params);
    FlowSnapshot next = snap;
    solver.step(next);
    return next;
}

void run_flow(const FlowParams& params, std::uint64_t seed, double duration, const FlowSampler& sampler) {
    params.validate();
    if (!(duration > params.discard)) throw DomainError("run_flow: duration must exceed the discarded transient");
    KolmogorovSolver solver(params);
    FlowSnapshot snap{0.0, solver.random_initial(seed)};
    const long long per_sample = params.steps_per_sample();
    const long long total = std::llround(duration / params.dt_solver);
    const long long first_sample_step =
        per_sample * static_cast<long long>(std::ceil(params.discard / params.dt_sample - 1e-9));
    for (long long s = 0;; ++s) {
        snap.time = static_cast<double>(s) * params.dt_solver;
        if (s >= first_sample_step && s % per_sample == 0) sampler(snap, solver);
        if (s == total) break;
        solver.step(snap);
    }
}

TrajectoryRecord simulate_flow(const FlowParams& params, std::uint64_t seed, double duration) {
    std::vector<double> data;
    std::vector<double> times;
    run_flow(params, seed, duration, [&](const FlowSnapshot& snap, KolmogorovSolver& solver) {
        const RowMatrixXd grid = solver.to_grid(snap.omega_hat);
        data.insert(data.end(), grid.data(), grid.data() + grid.size());
        times.push_back(snap.time);
    });
    TrajectoryRecord rec;
    rec.system_tag = SystemTag::KolmogorovGrid;
    rec.dt = params.dt_sample;
    rec.t0 = times.front();
    const Eigen::Index cols = static_cast<Eigen::Index>(params.grid) * params.grid;
    rec.states = Eigen::Map<RowMatrixXd>(data.data(), static_cast<Eigen::Index>(times.size()), cols);
    return rec;
}

namespace {

// Band-limited trigonometric interpolation at fixed points.
class ProbeEvaluator {
public:
    ProbeEvaluator(int n, int band, const std::vector<Point2>& points) : n_(n), band_(band) {
        for (const auto& pt : points) {
            std::vector<cd> ex(n), ey(band + 1);
            for (int i = 0; i < n; ++i) ex[i] = std::polar(1.0, wrap_kx(i, n) * pt.x);
            for (int j = 0; j <= band; ++j) ey[j] = std::polar(1.0, j * pt.y);
            ex_.push_back(std::move(ex));
            ey_.push_back(std::move(ey));
        }
    }

    double operator()(const SpectralField& hat, std::size_t p) const {
        double total = 0.0;
        for (int j = 0; j <= band_; ++j) {
            cd col(0.0);
            for (int i = 0; i < n_; ++i) {
                if (std::abs(wrap_kx(i, n_)) > band_) continue;
                col += hat(i, j) * ex_[p][i];
            }
            total += column_weight(j, n_) * std::real(col * ey_[p][j]);
        }
        return total;
    }

private:
    int n_, band_;
    std::vector<std::vector<cd>> ex_, ey_;
};

}  // namespace

TrajectoryRecord simulate_flow_diagnostics(const FlowParams& params, std::uint64_t seed, double duration,
                                           const std::vector<Point2>& probes) {
    const Eigen::Index cols = FlowDiagnosticsLayout::first_probe + static_cast<Eigen::Index>(probes.size());
    std::vector<double> data;
    std::vector<double> times;
    const ProbeEvaluator evaluator(params.grid, params.band_limit(), probes);
    long long samples = 0;
    run_flow(params, seed, duration, [&](const FlowSnapshot& snap, KolmogorovSolver&) {
        data.push_back(energy_dissipation(snap, params));
        const FourierMode mode = extract_fourier_mode(snap, 1, 0);
        data.push_back(mode.a.real());
        data.push_back(mode.a.imag());
        for (std::size_t p = 0; p < probes.size(); ++p) data.push_back(evaluator(snap.omega_hat, p));
        times.push_back(snap.time);
        if (++samples % 10000 == 0) spdlog::info("kolmogorov flow: t = {:.1f}", snap.time);
    });
    TrajectoryRecord rec;
    rec.system_tag = SystemTag::KolmogorovDiagnostics;
    rec.dt = params.dt_sample;
    rec.t0 = times.front();
    rec.states = Eigen::Map<RowMatrixXd>(data.data(), static_cast<Eigen::Index>(times.size()), cols);
    return rec;
}

double energy_dissipation(const FlowSnapshot& snap, const FlowParams& params) {
    const auto& hat = snap.omega_hat;
    const int n = static_cast<int>(hat.rows());
    double sum = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < hat.cols(); ++j) sum += column_weight(j, n) * std::norm(hat(i, j));
    return params.viscosity() * sum;
}

double kinetic_energy(const FlowSnapshot& snap) {
    const auto& hat = snap.omega_hat;
    const int n = static_cast<int>(hat.rows());
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const int kxi = wrap_kx(i, n);
        for (int j = 0; j < hat.cols(); ++j) {
            const int k2 = kxi * kxi + j * j;
            if (k2 > 0) sum += column_weight(j, n) * std::norm(hat(i, j)) / k2;
        }
    }
    return 0.5 * sum;
}

double energy_input(const FlowSnapshot& snap, const FlowParams& params) {
    const int nf = params.forcing_wavenumber;
    // <u sin(n y)> = -Im u_hat(0, n), u_hat(0, n) = i omega_hat(0, n) / n
    return -snap.omega_hat(0, nf).real() / nf;
}

std::complex<double> spectral_coefficient(const SpectralField& hat, int kx, int ky) {
    const int n = static_cast<int>(hat.rows());
    if (ky < 0) return std::conj(spectral_coefficient(hat, -kx, -ky));
    if (ky >= hat.cols() || std::abs(kx) > n / 2) throw RangeError("wavevector outside the stored spectrum");
    return hat(((kx % n) + n) % n, ky);
}

FourierMode extract_fourier_mode(const FlowSnapshot& snap, int kx, int ky) {
    const int band = snap.grid() / 3;
    if ((kx == 0 && ky == 0) || std::abs(kx) > band || std::abs(ky) > band) {
        throw RangeError("extract_fourier_mode: wavevector (" + std::to_string(kx) + "," + std::to_string(ky) +
                         ") outside the dealiased band");
    }
    // u = sum a(k)/|k|^2 (k_y, -k_x) e^{ik.x} gives omega_hat = -i a.
    return {kx, ky, cd(0.0, 1.0) * spectral_coefficient(snap.omega_hat, kx, ky)};
}

std::vector<double> probe_vorticity(const FlowSnapshot& snap, const std::vector<Point2>& points) {
    const auto& hat = snap.omega_hat;
    const int n = static_cast<int>(hat.rows());
    std::vector<double> out;
    out.reserve(points.size());
    for (const auto& pt : points) {
        double total = 0.0;
        for (int j = 0; j < hat.cols(); ++j) {
            cd col(0.0);
            for (int i = 0; i < n; ++i) col += hat(i, j) * std::polar(1.0, wrap_kx(i, n) * pt.x);
            total += column_weight(j, n) * std::real(col * std::polar(1.0, j * pt.y));
        }
        out.push_back(total);
    }
    return out;
}

FlowSnapshot snapshot_from_grid_row(const TrajectoryRecord& rec, Eigen::Index row, const FlowParams& params) {
    const Eigen::Index n = params.grid;
    if (rec.system_tag != SystemTag::KolmogorovGrid || rec.dim() != n * n) {
        throw ConfigError("snapshot_from_grid_row: record is not a vorticity grid of the configured size");
    }
    KolmogorovSolver solver(params);
    const RowMatrixXd grid = Eigen::Map<const RowMatrixXd>(rec.states.row(row).data(), n, n);
    FlowSnapshot snap{rec.time(row), solver.from_grid(grid)};
    solver.enforce_invariants(snap.omega_hat);
    return snap;
}

}  // namespace eventcast
