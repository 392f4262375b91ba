#include "fracorder/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

namespace fracorder {
namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

// coefficient samples (size 1 = constant, otherwise uniform over [0, ell])
double sample_coefficient(const std::vector<double>& v, double x, double ell) {
  if (v.size() == 1) return v[0];
  const double s = x / ell * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::clamp(s, 0.0, static_cast<double>(v.size() - 2)));
  const double w = s - static_cast<double>(i);
  return v[i] * (1.0 - w) + v[i + 1] * w;
}

struct Tridiag {
  std::vector<double> d;  // diagonal
  std::vector<double> e;  // superdiagonal (size m-1)
  std::vector<double> mass;    // lumped mass per unknown (for phi recovery / norms)
  std::vector<double> nodes;   // mesh coordinates of the unknowns
};

// Conservation-form central differences.  Neumann keeps both endpoints as
// unknowns with half-cell mass and is symmetrized by M^{-1/2} K M^{-1/2};
// Dirichlet eliminates the boundary rows.  Either way the eigenproblem that
// reaches the bisection solver is symmetric tridiagonal.
Tridiag assemble(const SturmLiouvilleProblem& pb, int n_cells) {
  const double h = pb.ell / n_cells;
  std::vector<double> phalf(static_cast<std::size_t>(n_cells));
  for (int i = 0; i < n_cells; ++i)
    phalf[static_cast<std::size_t>(i)] = sample_coefficient(pb.p, (i + 0.5) * h, pb.ell);

  Tridiag t;
  if (pb.bc == BoundaryCondition::Dirichlet) {
    const int m = n_cells - 1;
    t.d.resize(static_cast<std::size_t>(m));
    t.e.resize(static_cast<std::size_t>(m - 1));
    t.mass.assign(static_cast<std::size_t>(m), h);
    t.nodes.resize(static_cast<std::size_t>(m));
    for (int i = 1; i < n_cells; ++i) {
      const double x = i * h;
      t.nodes[static_cast<std::size_t>(i - 1)] = x;
      t.d[static_cast<std::size_t>(i - 1)] =
          (phalf[static_cast<std::size_t>(i - 1)] + phalf[static_cast<std::size_t>(i)]) / (h * h) -
          sample_coefficient(pb.c, x, pb.ell);
      if (i < n_cells - 1) t.e[static_cast<std::size_t>(i - 1)] = -phalf[static_cast<std::size_t>(i)] / (h * h);
    }
  } else {
    const int m = n_cells + 1;
    std::vector<double> kd(static_cast<std::size_t>(m)), ke(static_cast<std::size_t>(m - 1));
    t.mass.resize(static_cast<std::size_t>(m));
    t.nodes.resize(static_cast<std::size_t>(m));
    for (int i = 0; i <= n_cells; ++i) {
      const double x = i * h;
      t.nodes[static_cast<std::size_t>(i)] = x;
      const double mi = (i == 0 || i == n_cells) ? h / 2.0 : h;
      t.mass[static_cast<std::size_t>(i)] = mi;
      double flux = 0.0;
      if (i > 0) flux += phalf[static_cast<std::size_t>(i - 1)] / h;
      if (i < n_cells) flux += phalf[static_cast<std::size_t>(i)] / h;
      kd[static_cast<std::size_t>(i)] = flux - sample_coefficient(pb.c, x, pb.ell) * mi;
      if (i < n_cells) ke[static_cast<std::size_t>(i)] = -phalf[static_cast<std::size_t>(i)] / h;
    }
    t.d.resize(static_cast<std::size_t>(m));
    t.e.resize(static_cast<std::size_t>(m - 1));
    for (int i = 0; i < m; ++i) t.d[static_cast<std::size_t>(i)] = kd[static_cast<std::size_t>(i)] / t.mass[static_cast<std::size_t>(i)];
    for (int i = 0; i + 1 < m; ++i)
      t.e[static_cast<std::size_t>(i)] =
          ke[static_cast<std::size_t>(i)] / std::sqrt(t.mass[static_cast<std::size_t>(i)] * t.mass[static_cast<std::size_t>(i + 1)]);
  }
  return t;
}

// Sturm-sequence count of eigenvalues strictly below x
int count_below(const std::vector<double>& d, const std::vector<double>& e, double x) {
  constexpr double pivmin = 1e-290;
  int cnt = 0;
  double q = d[0] - x;
  if (std::abs(q) < pivmin) q = -pivmin;
  if (q < 0.0) ++cnt;
  for (std::size_t i = 1; i < d.size(); ++i) {
    q = d[i] - x - e[i - 1] * e[i - 1] / q;
    if (std::abs(q) < pivmin) q = -pivmin;
    if (q < 0.0) ++cnt;
  }
  return cnt;
}

std::vector<double> bisect_eigenvalues(const std::vector<double>& d, const std::vector<double>& e,
                                       int count) {
  double lo = d[0], hi = d[0];
  for (std::size_t i = 0; i < d.size(); ++i) {
    double r = 0.0;
    if (i > 0) r += std::abs(e[i - 1]);
    if (i + 1 < d.size()) r += std::abs(e[i]);
    lo = std::min(lo, d[i] - r);
    hi = std::max(hi, d[i] + r);
  }
  const double span = hi - lo;
  std::vector<double> lam(static_cast<std::size_t>(count));
  for (int k = 1; k <= count; ++k) {
    double a = lo, b = hi;
    for (int it = 0; it < 80 && (b - a) > span * 1e-16; ++it) {
      const double mid = 0.5 * (a + b);
      if (count_below(d, e, mid) >= k)
        b = mid;
      else
        a = mid;
    }
    lam[static_cast<std::size_t>(k - 1)] = 0.5 * (a + b);
  }
  return lam;
}

// Tridiagonal solve of (T - shift I) x = b with partial pivoting; the shifted
// matrix is near-singular by design, which is exactly what inverse iteration
// wants.  Band storage with one fill-in superdiagonal.
void shifted_solve(const std::vector<double>& d, const std::vector<double>& e, double shift,
                   std::vector<double>& x) {
  const std::size_t m = d.size();
  std::vector<double> a(m), b(m, 0.0), c2(m, 0.0);  // diag, super1, super2 after pivoting
  std::vector<double> sub(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) a[i] = d[i] - shift;
  for (std::size_t i = 0; i + 1 < m; ++i) {
    b[i] = e[i];
    sub[i + 1] = e[i];
  }
  std::vector<int> piv(m, 0);
  for (std::size_t i = 0; i + 1 < m; ++i) {
    if (std::abs(sub[i + 1]) > std::abs(a[i])) {
      piv[i] = 1;
      std::swap(a[i], sub[i + 1]);
      std::swap(b[i], a[i + 1]);
      if (i + 2 < m) std::swap(c2[i], b[i + 1]);
      std::swap(x[i], x[i + 1]);
    }
    if (a[i] == 0.0) a[i] = 1e-290;
    const double l = sub[i + 1] / a[i];
    a[i + 1] -= l * b[i];
    if (i + 2 < m) b[i + 1] -= l * c2[i];
    x[i + 1] -= l * x[i];
  }
  if (a[m - 1] == 0.0) a[m - 1] = 1e-290;
  for (std::size_t ii = m; ii-- > 0;) {
    double v = x[ii];
    if (ii + 1 < m) v -= b[ii] * x[ii + 1];
    if (ii + 2 < m) v -= c2[ii] * x[ii + 2];
    x[ii] = v / a[ii];
  }
}

std::vector<double> inverse_iteration(const std::vector<double>& d, const std::vector<double>& e,
                                      double lambda, const std::vector<double>* orth_prev) {
  const std::size_t m = d.size();
  double scale = 0.0;
  for (double v : d) scale = std::max(scale, std::abs(v));
  const double shift = lambda + scale * 1e-14;  // nudge off exact singularity

  std::vector<double> x(m);
  for (std::size_t i = 0; i < m; ++i) x[i] = (i % 2 ? 0.7 : 1.0) / std::sqrt(static_cast<double>(m));
  for (int it = 0; it < 3; ++it) {
    shifted_solve(d, e, shift, x);
    if (orth_prev) {
      double dot = 0.0;
      for (std::size_t i = 0; i < m; ++i) dot += x[i] * (*orth_prev)[i];
      for (std::size_t i = 0; i < m; ++i) x[i] -= dot * (*orth_prev)[i];
    }
    double nrm = 0.0;
    for (double v : x) nrm += v * v;
    nrm = std::sqrt(nrm);
    for (double& v : x) v /= nrm;
  }
  return x;
}

struct FdSolution {
  std::vector<double> lambdas;
  std::vector<std::vector<double>> psis;  // l2-orthonormal symmetrized vectors
  Tridiag sys;
};

FdSolution solve_mesh(const SturmLiouvilleProblem& pb, int count, int n_cells) {
  FdSolution s;
  s.sys = assemble(pb, n_cells);
  s.lambdas = bisect_eigenvalues(s.sys.d, s.sys.e, count);
  s.psis.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const std::vector<double>* prev = nullptr;
    if (k > 0) {
      const double gap = s.lambdas[static_cast<std::size_t>(k)] - s.lambdas[static_cast<std::size_t>(k - 1)];
      const double sc = std::max(1.0, std::abs(s.lambdas[static_cast<std::size_t>(k)]));
      if (gap < 1e-8 * sc) prev = &s.psis.back();
    }
    s.psis.push_back(inverse_iteration(s.sys.d, s.sys.e, s.lambdas[static_cast<std::size_t>(k)], prev));
  }
  return s;
}

double lagrange4(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  // 4-point Lagrange interpolation on the stencil around x
  const auto it = std::lower_bound(xs.begin(), xs.end(), x);
  std::ptrdiff_t i = it - xs.begin();
  std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(i - 2, 0, static_cast<std::ptrdiff_t>(xs.size()) - 4);
  double sum = 0.0;
  for (std::ptrdiff_t a = lo; a < lo + 4; ++a) {
    double w = 1.0;
    for (std::ptrdiff_t b = lo; b < lo + 4; ++b)
      if (b != a) w *= (x - xs[static_cast<std::size_t>(b)]) / (xs[static_cast<std::size_t>(a)] - xs[static_cast<std::size_t>(b)]);
    sum += w * ys[static_cast<std::size_t>(a)];
  }
  return sum;
}

double trapezoid(const std::vector<double>& mesh, const std::vector<double>& f) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < mesh.size(); ++i)
    s += 0.5 * (mesh[i + 1] - mesh[i]) * (f[i] + f[i + 1]);
  return s;
}

// composite Simpson on a uniform mesh; odd interval counts finish with a
// Simpson 3/8 cell so the order stays 4
double simpson(const std::vector<double>& mesh, const std::vector<double>& f) {
  const std::size_t n = mesh.size() - 1;
  const double h = (mesh.back() - mesh.front()) / static_cast<double>(n);
  double s = 0.0;
  std::size_t last = n;
  if (n % 2 != 0) {
    last = n - 3;
    s += 3.0 * h / 8.0 * (f[last] + 3.0 * f[last + 1] + 3.0 * f[last + 2] + f[last + 3]);
  }
  for (std::size_t i = 0; i + 2 <= last; i += 2)
    s += h / 3.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
  return s;
}

bool mesh_is_uniform(const std::vector<double>& mesh) {
  if (mesh.size() < 3) return true;
  const double h = mesh[1] - mesh[0];
  for (std::size_t i = 1; i + 1 < mesh.size(); ++i)
    if (std::abs((mesh[i + 1] - mesh[i]) - h) > 1e-12 * std::abs(h)) return false;
  return true;
}

}  // namespace

EigenSystem solve_eigs_fd(const SturmLiouvilleProblem& problem, int count, int mesh_size) {
  problem.validate();
  require(count >= 1, "need at least one eigenpair");
  require(mesh_size >= 8 * count, "mesh_size must be at least 8*count");
  require(mesh_size % 2 == 0, "mesh_size must be even (coarse mesh is mesh_size/2)");

  const auto fine = solve_mesh(problem, count, mesh_size);
  const auto coarse = solve_mesh(problem, count, mesh_size / 2);

  const double h = problem.ell / mesh_size;
  const double lam_top = std::max(fine.lambdas.back(), 1.0);

  EigenSystem out;
  out.dim = 1;
  out.bc = problem.bc;
  out.mesh = fine.sys.nodes;
  out.lambdas.resize(static_cast<std::size_t>(count));
  out.error_estimates.resize(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double lf = fine.lambdas[static_cast<std::size_t>(k)];
    const double lc = coarse.lambdas[static_cast<std::size_t>(k)];
    out.lambdas[static_cast<std::size_t>(k)] = (4.0 * lf - lc) / 3.0;
    // residual h^4 term of the extrapolated value, scaled from the measured
    // h^2 term by the constant-coefficient ratio C4/C2 ~ lambda h^2/30, with
    // a 3x safety factor for variable coefficients
    out.error_estimates[static_cast<std::size_t>(k)] =
        std::abs(lf - lc) * std::max(std::abs(lf), 1.0) * h * h * (2.0 / 15.0);
    if (out.error_estimates[static_cast<std::size_t>(k)] > 1e-6 * lam_top)
      throw ResolutionError("eigenvalue " + std::to_string(k + 1) + " error estimate " +
                            std::to_string(out.error_estimates[static_cast<std::size_t>(k)]) +
                            " exceeds 1e-6 * lambda_count; refine the mesh");
  }

  // recover phi = M^{-1/2} psi on the fine mesh, then apply the BC-specific
  // normalization; the mass-weighted norm is the composite-trapezoid L2 norm
  out.phis.resize(static_cast<std::size_t>(count));
  out.sigmas.resize(static_cast<std::size_t>(count));
  const bool neumann = problem.bc == BoundaryCondition::Neumann;
  for (int k = 0; k < count; ++k) {
    const auto& psi = fine.psis[static_cast<std::size_t>(k)];
    const auto& mass = fine.sys.mass;
    std::vector<double> phi(psi.size());
    for (std::size_t i = 0; i < psi.size(); ++i) phi[i] = psi[i] / std::sqrt(mass[i]);

    if (neumann) {
      double pmax = 0.0;
      for (double v : phi) pmax = std::max(pmax, std::abs(v));
      if (std::abs(phi[0]) < 1e-8 * pmax)
        throw NormalizationError("Neumann eigenfunction " + std::to_string(k + 1) +
                                 " vanishes at x=0; phi(0)=1 normalization impossible");
      const double s = 1.0 / phi[0];
      for (double& v : phi) v *= s;
      double nrm2 = 0.0;
      for (std::size_t i = 0; i < phi.size(); ++i) nrm2 += mass[i] * phi[i] * phi[i];
      out.sigmas[static_cast<std::size_t>(k)] = 1.0 / nrm2;
      out.phis[static_cast<std::size_t>(k)] = std::move(phi);
    } else {
      // psi is l2-normalized, so phi is already L2-normalized; pad boundary zeros
      double sign = 1.0;
      for (double v : phi)
        if (std::abs(v) > 1e-12) {
          sign = v > 0.0 ? 1.0 : -1.0;
          break;
        }
      std::vector<double> full(phi.size() + 2, 0.0);
      for (std::size_t i = 0; i < phi.size(); ++i) full[i + 1] = sign * phi[i];
      out.sigmas[static_cast<std::size_t>(k)] = 1.0;
      out.phis[static_cast<std::size_t>(k)] = std::move(full);
    }
  }
  if (!neumann) {
    // extend the mesh with the boundary nodes the Dirichlet unknowns excluded
    std::vector<double> full_mesh(out.mesh.size() + 2);
    full_mesh.front() = 0.0;
    full_mesh.back() = problem.ell;
    std::copy(out.mesh.begin(), out.mesh.end(), full_mesh.begin() + 1);
    out.mesh = std::move(full_mesh);
  }
  return out;
}

EigenSystem closed_form_eigs(const ConstantCoefficientSpec& spec, int count) {
  require(count >= 1, "need at least one eigenpair");
  require(spec.p > 0.0, "p must be positive");
  require(spec.c <= 0.0, "c must be nonpositive");
  require(spec.mesh_size >= 8, "mesh_size too small");

  EigenSystem out;
  out.bc = spec.bc;
  if (spec.geometry == ConstantCoefficientSpec::Geometry::Interval) {
    const int nn = spec.mesh_size;
    out.dim = 1;
    out.mesh.resize(static_cast<std::size_t>(nn) + 1);
    for (int i = 0; i <= nn; ++i) out.mesh[static_cast<std::size_t>(i)] = spec.ell * i / nn;
    for (int k = 1; k <= count; ++k) {
      const bool neu = spec.bc == BoundaryCondition::Neumann;
      const double mu = (neu ? (k - 1) : k) * kPi / spec.ell;
      out.lambdas.push_back(spec.p * mu * mu - spec.c);
      std::vector<double> phi(out.mesh.size());
      if (neu) {
        for (std::size_t i = 0; i < phi.size(); ++i) phi[i] = std::cos(mu * out.mesh[i]);
        out.sigmas.push_back(k == 1 ? 1.0 / spec.ell : 2.0 / spec.ell);
      } else {
        const double nrm = std::sqrt(2.0 / spec.ell);
        for (std::size_t i = 0; i < phi.size(); ++i) phi[i] = nrm * std::sin(mu * out.mesh[i]);
        out.sigmas.push_back(1.0);
      }
      out.phis.push_back(std::move(phi));
    }
  } else {
    if (spec.bc != BoundaryCondition::Dirichlet)
      throw UnsupportedCase("rectangle eigenpairs are implemented for Dirichlet conditions only");
    out.dim = 2;
    const int nn = spec.mesh_size;
    out.mesh.resize(static_cast<std::size_t>(nn) + 1);
    out.mesh_y.resize(static_cast<std::size_t>(nn) + 1);
    for (int i = 0; i <= nn; ++i) {
      out.mesh[static_cast<std::size_t>(i)] = spec.ell * i / nn;
      out.mesh_y[static_cast<std::size_t>(i)] = spec.ell_y * i / nn;
    }
    const int k_side = static_cast<int>(std::ceil(2.0 * std::sqrt(static_cast<double>(count)))) + 8;
    std::vector<std::tuple<double, int, int>> modes;
    for (int i = 1; i <= k_side; ++i)
      for (int j = 1; j <= k_side; ++j) {
        const double mu2 = std::pow(i * kPi / spec.ell, 2) + std::pow(j * kPi / spec.ell_y, 2);
        modes.emplace_back(spec.p * mu2 - spec.c, i, j);
      }
    std::sort(modes.begin(), modes.end());  // ties break lexicographically in (i,j)
    const double nrm = 2.0 / std::sqrt(spec.ell * spec.ell_y);
    for (int k = 0; k < count; ++k) {
      const auto& [lam, i, j] = modes[static_cast<std::size_t>(k)];
      out.lambdas.push_back(lam);
      out.sigmas.push_back(1.0);
      std::vector<double> phi((static_cast<std::size_t>(nn) + 1) * (static_cast<std::size_t>(nn) + 1));
      for (int iy = 0; iy <= nn; ++iy)
        for (int ix = 0; ix <= nn; ++ix)
          phi[static_cast<std::size_t>(iy) * (static_cast<std::size_t>(nn) + 1) + static_cast<std::size_t>(ix)] =
              nrm * std::sin(i * kPi * out.mesh[static_cast<std::size_t>(ix)] / spec.ell) *
              std::sin(j * kPi * out.mesh_y[static_cast<std::size_t>(iy)] / spec.ell_y);
      out.phis.push_back(std::move(phi));
    }
  }
  out.error_estimates.assign(out.lambdas.size(), 0.0);
  return out;
}

WeylFit weyl_check(const EigenSystem& eigs, int dim) {
  require(eigs.count() >= 20, "Weyl check needs at least 20 eigenvalues");
  require(dim == 1 || dim == 2, "Weyl check supports dim 1 and 2");
  WeylFit fit;
  fit.expected = 2.0 / dim;

  const std::size_t n = eigs.count();
  const std::size_t lo = n / 2;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  std::size_t cnt = 0;
  fit.c0 = std::numeric_limits<double>::infinity();
  fit.c1 = 0.0;
  for (std::size_t j = lo; j < n; ++j) {
    if (eigs.lambdas[j] <= 0.0) continue;
    const double x = std::log(static_cast<double>(j + 1));
    const double y = std::log(eigs.lambdas[j]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++cnt;
    const double ratio = eigs.lambdas[j] / std::pow(static_cast<double>(j + 1), fit.expected);
    fit.c0 = std::min(fit.c0, ratio);
    fit.c1 = std::max(fit.c1, ratio);
  }
  require(cnt >= 2, "not enough positive eigenvalues for a slope");
  const double denom = static_cast<double>(cnt) * sxx - sx * sx;
  fit.slope = (static_cast<double>(cnt) * sxy - sx * sy) / denom;
  fit.pass = std::abs(fit.slope - fit.expected) <= 0.15 * fit.expected;
  return fit;
}

ModalWeights project_initial_data(const EigenSystem& eigs, const std::vector<double>& a, double x0) {
  require(eigs.dim == 1, "projection is implemented on interval meshes");
  require(a.size() == eigs.mesh.size(), "initial data must be sampled on the eigensystem mesh");
  require(x0 > eigs.mesh.front() && x0 < eigs.mesh.back(), "x0 must lie strictly inside the domain");

  const bool uniform = mesh_is_uniform(eigs.mesh);
  ModalWeights w;
  w.lambdas = eigs.lambdas;
  w.x0 = x0;
  w.data_min = *std::min_element(a.begin(), a.end());
  w.rhos.resize(eigs.count());
  std::vector<double> prod(a.size());
  for (std::size_t k = 0; k < eigs.count(); ++k) {
    const auto& phi = eigs.phis[k];
    for (std::size_t i = 0; i < a.size(); ++i) prod[i] = a[i] * phi[i];
    const double inner = trapezoid(eigs.mesh, prod);
    if (uniform) {
      const double gap = std::abs(inner - simpson(eigs.mesh, prod));
      if (gap > 1e-8) w.quadrature_flags.push_back(static_cast<int>(k));
    }
    w.rhos[k] = inner * sample_eigenfunction(eigs, k, x0);
  }
  return w;
}

ModalWeights project_dirac(const EigenSystem& eigs, double x0) {
  require(eigs.dim == 1, "Dirac projection is implemented on interval meshes");
  require(x0 >= eigs.mesh.front() && x0 <= eigs.mesh.back(), "x0 must lie inside the domain");
  ModalWeights w;
  w.lambdas = eigs.lambdas;
  w.x0 = x0;
  w.rhos.resize(eigs.count());
  for (std::size_t k = 0; k < eigs.count(); ++k) {
    const double at0 = eigs.phis[k].front();
    const double atx0 = (x0 == eigs.mesh.front()) ? at0 : sample_eigenfunction(eigs, k, x0);
    w.rhos[k] = eigs.sigmas[k] * at0 * atx0;
  }
  return w;
}

double sample_eigenfunction(const EigenSystem& eigs, std::size_t mode, double x0) {
  require(eigs.dim == 1, "pointwise sampling is implemented on interval meshes");
  require(mode < eigs.count(), "mode index out of range");
  return lagrange4(eigs.mesh, eigs.phis[mode], x0);
}

}  // namespace fracorder
