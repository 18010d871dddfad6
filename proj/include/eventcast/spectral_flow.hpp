#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "eventcast/systems.hpp"

namespace eventcast {

/// Half-plane vorticity spectrum: row = kx index (0..N-1, wrapped), column = ky (0..N/2).
/// Entries are Fourier-series coefficients, so the inverse transform yields grid values.
using SpectralField = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FlowParams {
    int grid = 128;
    double reynolds = 40.0;
    int forcing_wavenumber = 4;
    double dt_solver = 0.005;
    double dt_sample = 0.2;
    double discard = 20.0;
    double cfl_limit = 0.5;

    double viscosity() const { return 1.0 / reynolds; }
    /// Largest retained |k_x|, |k_y| under the 2/3 rule.
    int band_limit() const { return grid / 3; }
    long long steps_per_sample() const;
    void validate() const;
};

struct FlowSnapshot {
    double time = 0.0;
    SpectralField omega_hat;

    int grid() const { return static_cast<int>(omega_hat.rows()); }
};

/// a(k) in u = sum_k a(k) / |k|^2 (k_y, -k_x) exp(i k.x).
struct FourierMode {
    int kx = 0;
    int ky = 0;
    std::complex<double> a;
};

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// {pi/3, pi, 5pi/3}^2, x-major.
std::vector<Point2> default_probe_points();

/// Route FFT planning through a wisdom file: plans are measured once and
/// reused bit-identically by later processes. Without a wisdom file the
/// planner uses FFTW's deterministic estimate mode.
void set_fft_wisdom_file(std::optional<std::filesystem::path> path);

/// Pseudospectral vorticity solver for 2-D Kolmogorov flow on [0, 2pi)^2.
/// Owns the FFT plans and scratch buffers; not shareable across threads.
class KolmogorovSolver {
public:
    explicit KolmogorovSolver(FlowParams params);
    ~KolmogorovSolver();
    KolmogorovSolver(KolmogorovSolver&&) noexcept;
    KolmogorovSolver& operator=(KolmogorovSolver&&) noexcept;
    KolmogorovSolver(const KolmogorovSolver&) = delete;
    KolmogorovSolver& operator=(const KolmogorovSolver&) = delete;

    const FlowParams& params() const;

    /// d omega_hat / dt. `max_speed`, when given, receives max(|u|, |v|) on the grid.
    void tendency(const SpectralField& omega_hat, SpectralField& out, double* max_speed = nullptr);
    /// One classical RK4 step of size dt_solver; re-imposes the spectral invariants.
    void step(FlowSnapshot& snap);

    RowMatrixXd to_grid(const SpectralField& hat);
    SpectralField from_grid(const RowMatrixXd& grid);
    std::pair<RowMatrixXd, RowMatrixXd> velocity(const SpectralField& omega_hat);

    /// Zero mean, exact ky = 0 conjugate symmetry, dealias mask.
    void enforce_invariants(SpectralField& hat) const;

    SpectralField laminar() const;
    SpectralField random_initial(std::uint64_t seed) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

SpectralField vorticity_rhs(const FlowSnapshot& snap, const FlowParams& params);
FlowSnapshot step_rk4(const FlowSnapshot& snap, const FlowParams& params);

/// Receives every retained sample (after the transient).
using FlowSampler = std::function<void(const FlowSnapshot&, KolmogorovSolver&)>;

void run_flow(const FlowParams& params, std::uint64_t seed, double duration, const FlowSampler& sampler);

/// Rows are the real vorticity grid flattened row-major (n = grid^2).
TrajectoryRecord simulate_flow(const FlowParams& params, std::uint64_t seed, double duration);

/// Column layout of a KolmogorovDiagnostics record.
struct FlowDiagnosticsLayout {
    static constexpr Eigen::Index dissipation = 0;
    static constexpr Eigen::Index mode_real = 1;
    static constexpr Eigen::Index mode_imag = 2;
    static constexpr Eigen::Index first_probe = 3;
};

/// Streams only [D, Re a(1,0), Im a(1,0), omega(probes)...] per sample, for
/// runs too long to keep the full grid.
TrajectoryRecord simulate_flow_diagnostics(const FlowParams& params, std::uint64_t seed, double duration,
                                           const std::vector<Point2>& probes = default_probe_points());

double energy_dissipation(const FlowSnapshot& snap, const FlowParams& params);
double kinetic_energy(const FlowSnapshot& snap);
/// Spatial mean of u . F, the power injected by the forcing.
double energy_input(const FlowSnapshot& snap, const FlowParams& params);

FourierMode extract_fourier_mode(const FlowSnapshot& snap, int kx, int ky);
std::vector<double> probe_vorticity(const FlowSnapshot& snap, const std::vector<Point2>& points);

/// omega_hat(kx, ky) for any integer wavevector, using conjugate symmetry for ky < 0.
std::complex<double> spectral_coefficient(const SpectralField& hat, int kx, int ky);

/// Snapshot rebuilt from a KolmogorovGrid record row.
FlowSnapshot snapshot_from_grid_row(const TrajectoryRecord& rec, Eigen::Index row, const FlowParams& params);

}  // namespace eventcast
