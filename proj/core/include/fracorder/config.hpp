#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fracorder/errors.hpp"
#include "fracorder/forward.hpp"
#include "fracorder/inverse.hpp"
#include "fracorder/model.hpp"
#include "fracorder/spectral.hpp"

namespace fracorder {

// One typed scalar or array.  Arrays hold reals or strings only (integer
// elements promote to real on parse); scalars keep their parsed kind so a
// document round-trips exactly.
struct ConfigValue {
  enum class Kind { Boolean, Integer, Real, String, RealArray, StringArray };

  Kind kind = Kind::Integer;
  bool b = false;
  long long i = 0;
  double d = 0.0;
  std::string s;
  std::vector<double> reals;
  std::vector<std::string> strings;

  static ConfigValue boolean(bool v);
  static ConfigValue integer(long long v);
  static ConfigValue real(double v);
  static ConfigValue string(std::string v);
  static ConfigValue real_array(std::vector<double> v);
  static ConfigValue string_array(std::vector<std::string> v);

  double as_real() const;      // Integer promotes; anything else throws
  long long as_integer() const;
  std::string render() const;  // value syntax as written in a document

  bool operator==(const ConfigValue& o) const;
};

// Flat `key = value` document.  One assignment per line, '#' starts a
// full-line comment, keys are dotted paths [A-Za-z0-9_.]+, duplicate keys are
// an error.  Values: true/false, integers, reals (shortest round-trip decimal
// on output, '.0' appended so the kind survives), double-quoted strings with
// \" \\ \n \t escapes, and [..] arrays of reals or strings.  serialize()
// emits entries in first-insertion order; parse(serialize(doc)) == doc.
class ConfigDoc {
public:
  static ConfigDoc parse(const std::string& text);  // PreconditionError with line number
  static ConfigDoc load(const std::string& path);

  std::string serialize() const;

  bool has(const std::string& key) const;
  const ConfigValue* find(const std::string& key) const;
  void set(const std::string& key, ConfigValue v);  // insert or overwrite in place

  // checked getters; the no-default forms throw on a missing key
  bool boolean(const std::string& key) const;
  bool boolean(const std::string& key, bool def) const;
  long long integer(const std::string& key) const;
  long long integer(const std::string& key, long long def) const;
  double real(const std::string& key) const;
  double real(const std::string& key, double def) const;
  const std::string& str(const std::string& key) const;
  std::string str(const std::string& key, const std::string& def) const;
  std::vector<double> reals(const std::string& key) const;
  std::vector<double> reals(const std::string& key, std::vector<double> def) const;
  std::vector<std::string> strings(const std::string& key) const;

  const std::vector<std::pair<std::string, ConfigValue>>& entries() const noexcept { return entries_; }
  bool operator==(const ConfigDoc& o) const { return entries_ == o.entries_; }

private:
  std::vector<std::pair<std::string, ConfigValue>> entries_;
};

// A parsed run configuration: the typed views every command dispatches on,
// plus the original document for echoing into result files.  Key reference:
//   problem.kind            "closed-form" (default) | "fd"
//   problem.geometry        "interval" (default) | "rectangle" (closed-form)
//   problem.bc              "dirichlet" | "neumann"
//   problem.ell, problem.ell_y, problem.p, problem.c    constants, or for fd
//   problem.p_expr/.c_expr  expression in x; problem.p_file/.c_file two-column CSV
//   problem.mesh_size, problem.modes
//   initial.kind            "dirac" (default for neumann) | "expr" | "file"
//   initial.expr / initial.file
//   model.orders, model.weights                        (synth/forward/laplace)
//   observation.x0, observation.t0, observation.t_max, observation.samples,
//   observation.geometric
//   forward.mode_count (default problem.modes), forward.mode_tail_tol
//   synth.noise_level, synth.seed
//   inverse.n_max, inverse.pk_terms, inverse.eta_grid, inverse.seed,
//   inverse.residual_drop_threshold, inverse.lsq.max_iter, inverse.lsq.step_tol,
//   inverse.lsq.residual_tol, inverse.lsq.damping_init
//   laplace.eta_min, laplace.eta_max, laplace.points   (or laplace.etas)
struct RunConfig {
  ConfigDoc doc;

  bool closed_form = true;
  ConstantCoefficientSpec cc;
  // fd problems: coefficient sources resolved later against the mesh
  std::string p_expr, c_expr, p_file, c_file;
  double ell = 1.0;
  BoundaryCondition bc = BoundaryCondition::Dirichlet;
  int mesh_size = 256;
  int modes = 60;

  enum class InitialKind { Dirac, Expr, File } initial = InitialKind::Dirac;
  std::string initial_expr, initial_file;

  bool has_model = false;
  FractionalModel model;

  double x0 = 0.0;
  ForwardConfig forward;

  double noise_level = 0.0;
  std::uint64_t seed = 0;

  IdentificationConfig inverse;

  std::vector<double> laplace_etas;  // empty means "derive from the trace window"

  // Validates cross-field constraints that the doc syntax cannot express.
  // Unknown keys are rejected (typo safety); value errors carry the key name.
  static RunConfig from_doc(ConfigDoc doc);
  static RunConfig load(const std::string& path);
};

}  // namespace fracorder
