#pragma once

#include <cstddef>
#include <vector>

#include "fracorder/errors.hpp"

namespace fracorder {

enum class BoundaryCondition { Neumann, Dirichlet };

// -(p(x) u')' - c(x) u on (0, ell), coefficients sampled on the solver mesh.
// p and c may also be given as single values meaning "constant".
struct SturmLiouvilleProblem {
  std::vector<double> p;  // > 0 everywhere; size 1 means constant
  std::vector<double> c;  // <= 0 everywhere; size 1 means constant
  double ell = 0.0;
  BoundaryCondition bc = BoundaryCondition::Neumann;

  void validate() const {
    require(ell > 0.0, "domain length must be positive");
    require(!p.empty() && !c.empty(), "coefficient samples must be nonempty");
    for (double v : p) require(v > 0.0, "p must be positive everywhere");
    for (double v : c) require(v <= 0.0, "c must be nonpositive everywhere");
  }
};

// Eigenpairs of the spatial operator on a shared mesh.  Neumann systems are
// normalized so phi_k(0) = 1 (sigma_k = 1/||phi_k||^2 is then the Dirac-data
// weight); Dirichlet systems are L2-normalized (sigma_k = 1).
struct EigenSystem {
  std::vector<double> lambdas;            // ascending
  std::vector<std::vector<double>> phis;  // one sampled eigenfunction per mode
  std::vector<double> sigmas;             // 1 / ||phi_k||_{L2}^2
  std::vector<double> mesh;               // node coordinates (1D)
  int dim = 1;                            // 1 interval, 2 separable rectangle
  std::vector<double> mesh_y;             // second coordinate (dim == 2 only)
  std::vector<double> error_estimates;    // per-eigenvalue discretization error
  BoundaryCondition bc = BoundaryCondition::Neumann;

  std::size_t count() const noexcept { return lambdas.size(); }
};

// Modal observation weights rho_j = (a, phi_j) phi_j(x0) and their eigenvalues.
struct ModalWeights {
  std::vector<double> rhos;
  std::vector<double> lambdas;
  std::vector<int> quadrature_flags;  // modes whose trapezoid/Simpson gap > 1e-8
  double x0 = 0.0;                    // observation point the rhos belong to
  double data_min = 0.0;              // min of the projected initial data samples

  double sum_abs() const {
    double s = 0.0;
    for (double r : rhos) s += std::abs(r);
    return s;
  }
};

// Constant-coefficient reference cases with known eigenpairs.
struct ConstantCoefficientSpec {
  enum class Geometry { Interval, Rectangle } geometry = Geometry::Interval;
  double ell = 1.0;     // interval length / rectangle x-side
  double ell_y = 1.0;   // rectangle y-side
  double p = 1.0;       // > 0
  double c = 0.0;       // <= 0
  BoundaryCondition bc = BoundaryCondition::Dirichlet;
  int mesh_size = 256;  // sampling resolution per axis
};

// Second-order conservation-form finite differences; symmetric tridiagonal
// eigensolve by Sturm bisection + inverse iteration on mesh_size and
// mesh_size/2 meshes, returning Richardson-extrapolated eigenvalues with the
// fine-mesh eigenvectors.  mesh_size >= 8*count required.
EigenSystem solve_eigs_fd(const SturmLiouvilleProblem& problem, int count, int mesh_size);

// Exact eigenpairs for constant coefficients: interval with either BC,
// Dirichlet rectangle (tensor products, sorted with multiplicity, ties in
// lexicographic (i,j) order).  UnsupportedCase for anything else.
EigenSystem closed_form_eigs(const ConstantCoefficientSpec& spec, int count);

struct WeylFit {
  double slope = 0.0;       // of log lambda_j vs log j, upper half of range
  double expected = 0.0;    // 2/dim
  double c0 = 0.0;          // min lambda_j / j^{2/dim} over the fit range
  double c1 = 0.0;          // max lambda_j / j^{2/dim}
  bool pass = false;        // slope within 15% of expected
};

// Least-squares growth-law check lambda_j ~ j^{2/dim}; needs >= 20 modes.
WeylFit weyl_check(const EigenSystem& eigs, int dim);

// rho_j = (a, phi_j) phi_j(x0) by composite trapezoid quadrature; modes whose
// trapezoid/Simpson discrepancy exceeds 1e-8 are flagged (QuadratureWarning
// is advisory, not thrown).  a must be sampled on eigs.mesh; x0 strictly
// inside the domain.
ModalWeights project_initial_data(const EigenSystem& eigs, const std::vector<double>& a, double x0);

// Dirac initial data at the observation point x0: weight sigma_j phi_j(x0)^2
// (for the Neumann phi(0)=1 normalization at x0=0 this is sigma_j itself).
ModalWeights project_dirac(const EigenSystem& eigs, double x0);

// Eigenfunction value at x0 from its mesh samples (4-point Lagrange).
double sample_eigenfunction(const EigenSystem& eigs, std::size_t mode, double x0);

}  // namespace fracorder
