"""Experiment configuration, written as TOML.

Top level
    mode        "sparse" | "robust"                       (required)
    n, p, k     integers                                  (required)
    t_max       iterations, default 25
    trials      default 20
    seed        non-negative base seed, default 0
    lambda      Huber knee; default 1/sqrt(n) for each n
    n_sweep     list of n; p and k scale in proportion to n
    scaling_t   iteration at which sweep slopes are fitted, default min(10, t_max)
    tau_method  "exact" | "grid-golden", default "exact"
    calib_tol   Huber calibration tolerance, default 1e-6
    decomp_budget  largest n*p for which projected designs are stored, default 4e6

[noise]
    kind          "gaussian" | "huber-mixture"  (mode default: sparse gaussian, robust mixture)
    sigma2        absolute variance of the Gaussian part, fixed across a sweep
    scale2        n * sigma2, rescaled with n; default 0.25 (sparse) or 1.0 (robust)
    eps_h         contamination fraction, default 0 (sparse) or 0.05 (robust)
    contam        "none" | "point-mass" | "heavy-tail"
    contam_value  point-mass location or Cauchy scale; default 5 sigma or sigma

[signal]
    kind          "signed-uniform-support" (default)
    magnitude     per-entry amplitude, default 1/sqrt(k)

[diagnostics]
    decomp, w1 (default true), hat, hfun (default false)
"""

import math
from dataclasses import dataclass, field

from .exceptions import ConfigError
from .model import NoiseSpec, SignalSpec

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

_TOP = {"mode", "n", "p", "k", "t_max", "trials", "seed", "lambda", "n_sweep", "scaling_t",
        "tau_method", "calib_tol", "decomp_budget", "noise", "signal", "diagnostics"}
_NOISE = {"kind", "sigma2", "scale2", "eps_h", "contam", "contam_value"}
_SIGNAL = {"kind", "magnitude"}
_DIAG = {"decomp", "hat", "w1", "hfun"}


@dataclass(frozen=True)
class Diagnostics:
    decomp: bool = True
    hat: bool = False
    w1: bool = True
    hfun: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    n: int
    p: int
    k: int
    t_max: int = 25
    trials: int = 20
    seed: int = 0
    lam: float = None
    n_sweep: tuple = None
    scaling_t: int = None
    tau_method: str = "exact"
    calib_tol: float = 1e-6
    decomp_budget: int = 4_000_000
    noise: dict = field(default_factory=dict)
    signal: dict = field(default_factory=dict)
    diagnostics: Diagnostics = Diagnostics()
    warnings: tuple = ()

    def dims(self, n):
        """``(n, p, k)`` with ``p`` and ``k`` scaled by ``n / self.n``."""
        if n == self.n:
            return self.n, self.p, self.k
        r = n / self.n
        return n, max(1, round(self.p * r)), max(1, round(self.k * r))

    def noise_spec(self, n):
        nz = self.noise
        kind = nz.get("kind", "gaussian" if self.mode == "sparse" else "huber-mixture")
        if "sigma2" in nz:
            sigma2 = float(nz["sigma2"])
        else:
            sigma2 = float(nz.get("scale2", 0.25 if self.mode == "sparse" else 1.0)) / n
        default_eps = 0.05 if kind == "huber-mixture" else 0.0
        eps_h = float(nz.get("eps_h", default_eps))
        contam = nz.get("contam", "point-mass" if eps_h > 0 else "none")
        return NoiseSpec(kind, sigma2, eps_h, contam, nz.get("contam_value"))

    def signal_spec(self):
        return SignalSpec(self.signal.get("kind", "signed-uniform-support"),
                          self.signal.get("magnitude"))

    def lam_for(self, n):
        return self.lam if self.lam is not None else 1.0 / math.sqrt(n)

    @property
    def report_t(self):
        return self.scaling_t if self.scaling_t is not None else min(10, self.t_max)


def _expect(table, key, types, path, required=False, default=None):
    if key not in table:
        if required:
            raise ConfigError("missing required key", path + key)
        return default
    val = table[key]
    if isinstance(val, bool) and bool not in types:
        raise ConfigError(f"expected {types[0].__name__}, got bool", path + key)
    if not isinstance(val, types):
        raise ConfigError(f"expected {types[0].__name__}, got {type(val).__name__}", path + key)
    return val


def _no_unknown(table, allowed, path):
    extra = sorted(set(table) - allowed)
    if extra:
        raise ConfigError("unknown key", path + extra[0])


def parse_config(text):
    """Parse and validate a TOML document into an :class:`ExperimentConfig`."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"malformed TOML: {err}") from err
    _no_unknown(doc, _TOP, "")
    mode = _expect(doc, "mode", (str,), "", required=True)
    if mode not in ("sparse", "robust"):
        raise ConfigError(f"must be 'sparse' or 'robust', got {mode!r}", "mode")
    n = _expect(doc, "n", (int,), "", required=True)
    p = _expect(doc, "p", (int,), "", required=True)
    k = _expect(doc, "k", (int,), "", required=True)
    for name, v in (("n", n), ("p", p), ("k", k)):
        if v < 1:
            raise ConfigError("must be a positive integer", name)
    if n * p > 2**31:
        raise ConfigError("design too large", "n")
    if k > p:
        raise ConfigError(f"k={k} exceeds p={p}", "k")
    t_max = _expect(doc, "t_max", (int,), "", default=25)
    trials = _expect(doc, "trials", (int,), "", default=20)
    seed = _expect(doc, "seed", (int,), "", default=0)
    if t_max < 1:
        raise ConfigError("must be >= 1", "t_max")
    if trials < 1:
        raise ConfigError("must be >= 1", "trials")
    if not 0 <= seed < 2**64:
        raise ConfigError("must lie in [0, 2^64)", "seed")
    lam = _expect(doc, "lambda", (int, float), "")
    if lam is not None and lam <= 0:
        raise ConfigError("must be positive", "lambda")
    sweep = _expect(doc, "n_sweep", (list,), "")
    if sweep is not None:
        if len(sweep) < 3 or not all(isinstance(x, int) and not isinstance(x, bool) and x > 1
                                     for x in sweep):
            raise ConfigError("needs at least three integers > 1", "n_sweep")
        sweep = tuple(sweep)
    scaling_t = _expect(doc, "scaling_t", (int,), "")
    if scaling_t is not None and not 1 <= scaling_t <= t_max:
        raise ConfigError("must lie in [1, t_max]", "scaling_t")
    tau_method = _expect(doc, "tau_method", (str,), "", default="exact")
    if tau_method not in ("exact", "grid-golden"):
        raise ConfigError(f"unknown method {tau_method!r}", "tau_method")
    calib_tol = float(_expect(doc, "calib_tol", (int, float), "", default=1e-6))
    budget = _expect(doc, "decomp_budget", (int,), "", default=4_000_000)

    noise = _expect(doc, "noise", (dict,), "", default={})
    _no_unknown(noise, _NOISE, "noise.")
    for key in ("sigma2", "scale2", "eps_h", "contam_value"):
        _expect(noise, key, (int, float), "noise.")
    for key in ("kind", "contam"):
        _expect(noise, key, (str,), "noise.")
    if "sigma2" in noise and "scale2" in noise:
        raise ConfigError("give either sigma2 or scale2", "noise.sigma2")
    signal = _expect(doc, "signal", (dict,), "", default={})
    _no_unknown(signal, _SIGNAL, "signal.")
    _expect(signal, "kind", (str,), "signal.")
    _expect(signal, "magnitude", (int, float), "signal.")
    if signal.get("kind", "signed-uniform-support") != "signed-uniform-support":
        raise ConfigError("only signed-uniform-support is available from a config", "signal.kind")
    diag = _expect(doc, "diagnostics", (dict,), "", default={})
    _no_unknown(diag, _DIAG, "diagnostics.")
    for key in _DIAG:
        _expect(diag, key, (bool,), "diagnostics.")

    cfg = ExperimentConfig(mode, n, p, k, t_max, trials, seed, lam, sweep, scaling_t,
                           tau_method, calib_tol, budget, dict(noise), dict(signal),
                           Diagnostics(**diag))
    warnings = []
    for nn in sweep or (n,):
        nn, pp, kk = cfg.dims(nn)
        where = "n" if nn == n else "n_sweep"
        if mode == "robust" and pp >= nn:
            raise ConfigError(f"robust mode needs p < n (n={nn}, p={pp})", where)
        if mode == "sparse" and (nn <= 2 * kk * math.log(pp / kk) or pp <= 2.3 * kk):
            warnings.append(f"n={nn}, p={pp}, k={kk}: outside n > 2k log(p/k), p > 2.3k")
        try:
            cfg.noise_spec(nn)
            cfg.signal_spec()
        except ValueError as err:
            raise ConfigError(str(err), "noise") from err
    return ExperimentConfig(**{**cfg.__dict__, "warnings": tuple(warnings)})


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
