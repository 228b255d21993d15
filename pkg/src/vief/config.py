"""Solver configuration knobs with the defaults used by the benchmarks."""

from dataclasses import dataclass, replace

from .errors import ConfigError


@dataclass(frozen=True)
class SolverOptions:
    eps: float = 1e-10
    leaf_size: int = 49            # outer tree leaf (points per box)
    layers: int = 0                # boundary-layer width; 0 = pick from eps/kernel
    proxy_layers: int = 0          # proxy band width; 0 = same as layers
    k_cut: int = 64                # skeleton size below which per-box blocks stay dense
    inner_leaf_size: int = 32      # leaf size of the inner 1D compressed blocks
    points_per_wavelength: float = 4.0   # interface retention density (oscillatory)
    interior_kappa_threshold: float = 16.0
    seed: int = 0
    square_proxy: bool = False     # thin proxy band to |skeleton| (square T solve)
    rank_cap_factor: float = 4.0   # dense fallback when low ranks exceed cap * fit
    e_dense_cut: int = 384         # direct dense inversion of E^-1 below this size

    def with_(self, **kw):
        return replace(self, **kw)

    def resolved_layers(self, spec):
        if self.layers:
            return self.layers
        if spec.family == "helmholtz2d":
            kappa = spec.k / (2.0 * 3.141592653589793)
            if kappa <= 8.0:
                return 2
            if kappa <= 32.0:
                return 3
            raise ConfigError(
                f"no layer default beyond kappa=32 (got {kappa:.1f}); set layers explicitly")
        return 1 if self.eps >= 1e-5 else 2

    def resolved_proxy_layers(self, spec):
        return self.proxy_layers or self.resolved_layers(spec)

    def keep_interface_interior(self, spec):
        if spec.family != "helmholtz2d":
            return False
        return spec.k / (2.0 * 3.141592653589793) >= self.interior_kappa_threshold
