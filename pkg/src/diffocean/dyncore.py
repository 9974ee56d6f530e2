"""Purely functional shallow-water dynamical core with a temperature tracer.

One forward-backward step updates surface elevation from the divergence,
then momentum from the updated elevation (rotation, lateral viscosity,
bottom drag, wind stress), then advects and diffuses temperature with the
updated flow. Momentum is linearized; the tracer is advected by the
evolving velocities, so losses built on the trajectory remain nonlinear in
the physical parameters.

step/step_n never mutate their input state and are bitwise deterministic;
concurrent rollouts from shared immutable states are safe.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .autodiff import mark_step, tree, unbox
from .autodiff import primitives as ops
from .errors import CFLError, DomainError, NonFiniteError, ShapeError
from .grid import Field, GridSpec, Staggering, divergence, interp, laplacian

CFL_SAFETY = 0.7


@dataclass
class ModelState:
    """Prognostic fields plus model time; the unit of the pure step."""

    u: Field
    v: Field
    eta: Field
    T: Field
    time: float = 0.0


tree.register_container(ModelState, children=("u", "v", "eta", "T"), aux=("time",))


@dataclass
class PhysParams:
    """Differentiable physical parameters of the channel model."""

    A_h: float = 0.0  # lateral viscosity, m^2/s
    r_bot: float = 0.0  # linear bottom friction, 1/s
    drag_mode: str = "linear"  # "linear" or "quadratic"
    C_d: float = 0.0  # quadratic drag coefficient (quadratic mode only)
    g: float = 9.81  # gravity, m/s^2
    rho0: float = 1024.0  # reference density, kg/m^3
    tau0: float = 0.0  # peak eastward wind stress, N/m^2
    wind_band: float = 0.5  # southern fraction of the domain under wind
    kappa_T: float = 0.0  # tracer diffusivity, m^2/s
    lambda_relax: float = 0.0  # surface temperature relaxation rate, 1/s
    T_star: Field = None  # relaxation target at centers, degC

    def __post_init__(self):
        if self.drag_mode not in ("linear", "quadratic"):
            raise DomainError(f"unknown drag mode {self.drag_mode!r}")
        for name in ("A_h", "r_bot", "C_d", "kappa_T", "lambda_relax"):
            value = getattr(self, name)
            if isinstance(value, (int, float)) and value < 0:
                raise DomainError(f"{name} must be non-negative, got {value}")
        if isinstance(self.rho0, (int, float)) and self.rho0 <= 0:
            raise DomainError(f"rho0 must be positive, got {self.rho0}")
        if not 0.0 < self.wind_band <= 1.0:
            raise DomainError(f"wind_band must lie in (0, 1], got {self.wind_band}")


tree.register_container(
    PhysParams,
    children=(
        "A_h",
        "r_bot",
        "C_d",
        "g",
        "rho0",
        "tau0",
        "kappa_T",
        "lambda_relax",
        "T_star",
    ),
    aux=("drag_mode", "wind_band"),
)


@dataclass(frozen=True)
class StepConfig:
    """Time stepping parameters and scheme constants."""

    dt: float
    n_steps: int = 1
    boundary: str = "free-slip"
    sqrt_eps: float = ops.REG_EPS_DEFAULT

    def __post_init__(self):
        if self.dt <= 0:
            raise CFLError(f"time step must be positive, got {self.dt}")
        if self.boundary not in ("free-slip", "no-slip"):
            raise DomainError(f"unknown boundary kind {self.boundary!r}")


def cfl_limit(g: GridSpec, gravity: float) -> float:
    """Largest stable dt for the gravity-wave speed sqrt(g*H)."""
    c = np.sqrt(float(unbox(gravity)) * g.H)
    if c == 0.0:
        return np.inf
    return CFL_SAFETY / (c * max(1.0 / g.dx, 1.0 / g.dy))


def check_cfl(c: StepConfig, p: PhysParams, g: GridSpec):
    limit = cfl_limit(g, p.g)
    if not c.dt < limit:
        raise CFLError(
            f"dt = {c.dt} s violates the CFL bound {limit:.6g} s "
            f"(sqrt(gH) = {np.sqrt(float(unbox(p.g)) * g.H):.6g} m/s)"
        )


def wind_stress_profile(g: GridSpec, tau0, band: float) -> Field:
    """Zonally uniform eastward wind stress over the southern band.

    tau_x(y) = tau0 * sin^2(pi * y / (band * Ly)) for y below band*Ly, else 0;
    the profile vanishes at both band edges.
    """
    profile = _unit_wind_profile(g, band)
    values = ops.mul(tau0, np.broadcast_to(profile, g.shape).copy())
    return Field(values, Staggering.U_FACE)


def _unit_wind_profile(g: GridSpec, band: float) -> np.ndarray:
    if not 0.0 < band <= 1.0:
        raise DomainError(f"wind band must lie in (0, 1], got {band}")
    y = g.y_center
    extent = band * g.Ly
    profile = np.where(y < extent, np.sin(np.pi * y / extent) ** 2, 0.0)
    return profile[np.newaxis, :]


def _check_finite(name: str, values, time: float):
    primal = unbox(values)
    if not np.all(np.isfinite(primal)):
        raise NonFiniteError(
            f"non-finite values in field '{name}' at model time {time} s"
        )


def step(s: ModelState, p: PhysParams, g: GridSpec, c: StepConfig) -> ModelState:
    """Advance the state by one forward-backward step; the input is untouched."""
    check_cfl(c, p, g)
    for name in ("u", "v", "eta", "T"):
        if getattr(s, name).shape != g.shape:
            raise ShapeError(
                f"state field '{name}' has shape {getattr(s, name).shape}, "
                f"grid is {g.shape}"
            )
    mark_step()

    u, eta, T = s.u, s.eta, s.T
    # The wall row of v is not a degree of freedom: mask it on entry so
    # neither the physics nor the gradients ever see wall-normal flow.
    v = Field(ops.mul(s.v.values, g.vwall_mask), Staggering.V_FACE)

    # Continuity first (forward-backward: momentum sees the updated eta).
    eta_new = eta - (c.dt * g.H) * divergence(u, v, g)

    v_at_u = interp(interp(v, Staggering.CENTER), Staggering.U_FACE)
    u_at_v = interp(interp(u, Staggering.CENTER), Staggering.V_FACE)

    if p.drag_mode == "linear":
        drag_u = p.r_bot * u
        drag_v = p.r_bot * v
    else:
        speed_u = ops.sqrt_reg(
            ops.add(
                ops.mul(u.values, u.values), ops.mul(v_at_u.values, v_at_u.values)
            ),
            eps=c.sqrt_eps,
        )
        speed_v = ops.sqrt_reg(
            ops.add(
                ops.mul(u_at_v.values, u_at_v.values), ops.mul(v.values, v.values)
            ),
            eps=c.sqrt_eps,
        )
        drag_u = Field(
            ops.div(ops.mul(p.C_d, ops.mul(speed_u, u.values)), g.H),
            Staggering.U_FACE,
        )
        drag_v = Field(
            ops.div(ops.mul(p.C_d, ops.mul(speed_v, v.values)), g.H),
            Staggering.V_FACE,
        )

    wind_accel = Field(
        ops.div(
            ops.mul(p.tau0, _unit_wind_profile(g, p.wind_band)),
            ops.mul(p.rho0, g.H),
        ),
        Staggering.U_FACE,
    )

    coriolis_u = Field(ops.mul(g.f_at_u, v_at_u.values), Staggering.U_FACE)
    coriolis_v = Field(ops.mul(g.f_at_v, u_at_v.values), Staggering.V_FACE)

    u_new = u + c.dt * (
        coriolis_u
        - p.g * _ddx_center_to_u(eta_new, g)
        + p.A_h * laplacian(u, g, boundary=c.boundary)
        - drag_u
        + wind_accel
    )
    v_tend = (
        -coriolis_v
        - p.g * _ddy_center_to_v(eta_new, g)
        + p.A_h * laplacian(v, g, boundary=c.boundary)
        - drag_v
    )
    v_new = Field(
        ops.mul(ops.add(v.values, ops.mul(c.dt, v_tend.values)), g.vwall_mask),
        Staggering.V_FACE,
    )

    T_new = T + c.dt * (
        -_advect(u_new, v_new, T, g)
        + p.kappa_T * laplacian(T, g)
        + p.lambda_relax * (p.T_star - T)
    )

    new_time = s.time + c.dt
    for name, f in (("u", u_new), ("v", v_new), ("eta", eta_new), ("T", T_new)):
        _check_finite(name, f.values, new_time)
    return ModelState(u=u_new, v=v_new, eta=eta_new, T=T_new, time=new_time)


def _ddx_center_to_u(f: Field, g: GridSpec) -> Field:
    return Field(ops.ddx_fwd(f.values, g.dx), Staggering.U_FACE)


def _ddy_center_to_v(f: Field, g: GridSpec) -> Field:
    return Field(ops.ddy_fwd(f.values, g.dy), Staggering.V_FACE)


def _advect(u: Field, v: Field, T: Field, g: GridSpec) -> Field:
    """First-order upwind flux divergence of T.

    The upwind branch choice is the subgradient at flow reversals; wall
    fluxes vanish because the wall v row is zero.
    """
    t = T.values
    t_east = ops.roll_x(t, -1)
    t_north = ops.shift_yp(t, fill="edge")  # multiplied by the zero wall row
    flux_x = ops.mul(u.values, ops.where_pos(u.values, t, t_east))
    flux_y = ops.mul(v.values, ops.where_pos(v.values, t, t_north))
    return Field(
        ops.add(ops.ddx_bwd(flux_x, g.dx), ops.ddy_bwd(flux_y, g.dy)),
        Staggering.CENTER,
    )


def step_n(s: ModelState, n: int, p: PhysParams, g: GridSpec, c: StepConfig) -> ModelState:
    """Fold of step; n = 0 returns the input state unchanged."""
    if n < 0:
        raise DomainError(f"step count must be non-negative, got {n}")
    out = s
    for _ in range(int(n)):
        out = step(out, p, g, c)
    return out


def barotropic_streamfunction(s: ModelState, g: GridSpec) -> Field:
    """Cumulative meridional integral of H*u*dy from the southern wall, m^3/s."""
    values = ops.mul(ops.cumsum_y(s.u.values), g.H * g.dy)
    return Field(values, Staggering.CENTER)


def transport(s: ModelState, g: GridSpec, i: int) -> float:
    """Zonal volume transport through the meridional section i, in Sverdrup."""
    if not 0 <= i < g.nx:
        raise ShapeError(f"section index {i} outside 0..{g.nx - 1}")
    u = np.asarray(unbox(s.u.values))
    return float(np.sum(u[i, :]) * g.H * g.dy / 1e6)


def bsf_mse_loss(s: ModelState, ref_psi: Field, g: GridSpec):
    """Mean squared error between the state's streamfunction and a reference."""
    psi = barotropic_streamfunction(s, g)
    if psi.shape != ref_psi.shape:
        raise ShapeError(
            f"reference streamfunction shape {ref_psi.shape} does not match "
            f"{psi.shape}"
        )
    diff = psi - ref_psi
    return ops.amean(ops.power(diff.values, 2.0))


def total_energy(s: ModelState, p: PhysParams, g: GridSpec) -> float:
    """Sum of 0.5*H*(u^2 + v^2) + 0.5*g*eta^2 over all cells."""
    u = np.asarray(unbox(s.u.values))
    v = np.asarray(unbox(s.v.values))
    eta = np.asarray(unbox(s.eta.values))
    gravity = float(unbox(p.g))
    return float(
        0.5 * g.H * (np.sum(u * u) + np.sum(v * v)) + 0.5 * gravity * np.sum(eta * eta)
    )


def linear_profile_field(g: GridSpec, south: float, north: float) -> Field:
    """Meridional linear profile at centers (used for relaxation targets)."""
    prof = south + (north - south) * (g.y_center / g.Ly)
    return Field(np.broadcast_to(prof[np.newaxis, :], g.shape).copy(), Staggering.CENTER)


def states_allclose(a: ModelState, b: ModelState, rtol=1e-12, atol=0.0) -> bool:
    for name in ("u", "v", "eta", "T"):
        va = np.asarray(unbox(getattr(a, name).values))
        vb = np.asarray(unbox(getattr(b, name).values))
        if not np.allclose(va, vb, rtol=rtol, atol=atol):
            return False
    return True


def states_equal_bitwise(a: ModelState, b: ModelState) -> bool:
    for name in ("u", "v", "eta", "T"):
        va = np.asarray(unbox(getattr(a, name).values))
        vb = np.asarray(unbox(getattr(b, name).values))
        if va.tobytes() != vb.tobytes():
            return False
    return np.float64(a.time).tobytes() == np.float64(b.time).tobytes()


def copy_state(s: ModelState) -> ModelState:
    return ModelState(
        u=Field(np.array(unbox(s.u.values)), Staggering.U_FACE),
        v=Field(np.array(unbox(s.v.values)), Staggering.V_FACE),
        eta=Field(np.array(unbox(s.eta.values)), Staggering.CENTER),
        T=Field(np.array(unbox(s.T.values)), Staggering.CENTER),
        time=s.time,
    )


def with_params(p: PhysParams, **changes) -> PhysParams:
    return replace(p, **changes)
