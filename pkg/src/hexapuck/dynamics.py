"""Deterministic, seedable physics for the puck-on-plate system.

The plate pose is never integrated directly: each strut runs an underdamped
second-order response toward its (possibly fault-modified) target length, and
the pose is the least-squares plane through the strut top endpoints. The puck
is a point mass sliding on that plane under the in-plane gravity projection,
Coulomb friction, rolling resistance, and inelastic-ish hexagonal walls.

Every stochastic term draws from generators owned by the `Simulator`, so a
seed plus a command sequence fully determines the trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateGeometryError, InvalidInputError
from .geometry import HsaParams, PlatformGeometry, PlatformPose, angle_to_length

SENSOR_HZ = 60.0


@dataclass(frozen=True)
class PhysicsParams:
    gravity: float = 9.81
    puck_mass: float = 0.050           # kg
    puck_radius: float = 0.025         # m (5 cm diameter ring)
    mu_static: float = 0.08
    mu_kinetic: float = 0.05
    rolling_coeff: float = 0.01
    wall_restitution: float = 0.3
    strut_natural_freq: float = 18.0   # rad/s
    strut_damping_ratio: float = 0.25
    physics_dt: float = 1.0 / 240.0
    sensor_noise_std: float = 0.001    # m, puck position readout
    strut_noise_std: float = 0.0002    # m, per-substep actuation jitter
    stick_speed: float = 0.001         # m/s, below this stiction can latch

    def __post_init__(self):
        numeric = (self.gravity, self.puck_mass, self.puck_radius, self.mu_static,
                   self.mu_kinetic, self.rolling_coeff, self.wall_restitution,
                   self.strut_natural_freq, self.strut_damping_ratio, self.physics_dt,
                   self.sensor_noise_std, self.strut_noise_std, self.stick_speed)
        if any(v < 0 for v in numeric):
            raise InvalidInputError("physics parameters must be nonnegative")
        if self.mu_static < self.mu_kinetic:
            raise InvalidInputError("mu_static must be >= mu_kinetic")
        if not 0.0 <= self.wall_restitution <= 1.0:
            raise InvalidInputError("wall_restitution must lie in [0, 1]")
        if not 0.0 < self.strut_damping_ratio < 1.0:
            raise InvalidInputError("strut response must be underdamped (0 < zeta < 1)")
        for period, name in ((1.0 / SENSOR_HZ, "sensor"), (1.0 / 15.0, "control")):
            ratio = period / self.physics_dt
            if abs(ratio - round(ratio)) > 1e-9:
                raise InvalidInputError(f"physics_dt must divide the {name} period")


@dataclass(frozen=True)
class FaultConfig:
    """Actuator fault schedule. ``trigger_step`` counts environment steps."""

    kind: str = "none"                   # none | buckle | break
    affected_struts: tuple[int, ...] = ()
    trigger_step: int = 0
    buckle_offset: float = math.radians(240.0)
    break_gain: float = 0.5

    def __post_init__(self):
        if self.kind not in ("none", "buckle", "break"):
            raise InvalidInputError(f"unknown fault kind {self.kind!r}")
        if self.kind != "none" and not self.affected_struts:
            raise InvalidInputError("faults need at least one affected strut")
        if any(not 0 <= s <= 5 for s in self.affected_struts):
            raise InvalidInputError("strut indices must be in 0..5")
        if not 0.0 < self.break_gain <= 1.0:
            raise InvalidInputError("break_gain must lie in (0, 1]")


@dataclass
class SimState:
    puck_pos: np.ndarray        # (2,) m, plate frame
    puck_vel: np.ndarray        # (2,) m/s
    strut_len: np.ndarray       # (6,) m, actual
    strut_len_target: np.ndarray  # (6,) m, commanded (post-fault)
    strut_vel: np.ndarray       # (6,) m/s
    plate_pose: PlatformPose
    sim_time: float = 0.0
    fault_active: bool = False
    buckle_excess: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def copy(self) -> "SimState":
        return SimState(
            puck_pos=self.puck_pos.copy(), puck_vel=self.puck_vel.copy(),
            strut_len=self.strut_len.copy(), strut_len_target=self.strut_len_target.copy(),
            strut_vel=self.strut_vel.copy(), plate_pose=self.plate_pose,
            sim_time=self.sim_time, fault_active=self.fault_active,
            buckle_excess=self.buckle_excess.copy(),
        )


@dataclass(frozen=True)
class PlaneFit:
    roll: float
    pitch: float
    height: float
    residual: float


def plane_fit(endpoints: np.ndarray) -> PlaneFit:
    """Least-squares plane through the strut top endpoints.

    Fits ``z = c + sx*x + sy*y`` and converts the plane normal back to the
    intrinsic x-y-z Euler convention (yaw-free). ``height`` is the plane
    height at the endpoint centroid; ``residual`` the RMS vertical misfit.
    """
    pts = np.asarray(endpoints, dtype=float)
    if pts.shape != (3, 6):
        raise InvalidInputError("plane_fit expects a 3x6 endpoint matrix")
    x, y, z = pts
    a = np.column_stack([np.ones(6), x, y])
    gram = a.T @ a
    try:
        coef = np.linalg.solve(gram, a.T @ z)
    except np.linalg.LinAlgError as exc:
        raise DegenerateGeometryError("endpoints do not span a plane") from exc
    if not np.isfinite(coef).all():
        raise DegenerateGeometryError("endpoints do not span a plane")
    c, sx, sy = coef
    normal = np.array([-sx, -sy, 1.0])
    normal /= math.sqrt(sx * sx + sy * sy + 1.0)
    pitch = math.asin(max(-1.0, min(1.0, normal[0])))
    roll = math.atan2(-normal[1], normal[2])
    height = c + sx * x.mean() + sy * y.mean()
    residual = float(np.sqrt(np.mean((a @ coef - z) ** 2)))
    return PlaneFit(roll=roll, pitch=pitch, height=height, residual=residual)


@dataclass(frozen=True)
class FaultEffect:
    target_length: float
    wound_excess: float
    noise_scale: float


def apply_fault(
    commanded_angle: float,
    strut_index: int,
    hsa: HsaParams,
    fault: FaultConfig,
    step_index: int,
    wound_excess: float = 0.0,
) -> FaultEffect:
    """Map a commanded servo angle to the strut's effective target length.

    Identity before the trigger step. A buckled strut has its neutral point
    shifted by ``buckle_offset`` and saturates at the buckling onset: extra
    rotation winds excess into the lattice instead of extending it, and the
    stored excess must be fully unwound (commanded back below onset by the
    same amount) before length tracks commands again. A broken strut keeps a
    fraction ``break_gain`` of its extension authority and doubles its
    actuation noise.
    """
    if step_index < 0:
        raise InvalidInputError("step_index must be nonnegative")
    active = fault.kind != "none" and step_index >= fault.trigger_step \
        and strut_index in fault.affected_struts
    if not active:
        return FaultEffect(angle_to_length(commanded_angle, hsa), wound_excess, 1.0)

    if fault.kind == "break":
        length = hsa.nominal_length + hsa.extension_rate * fault.break_gain * commanded_angle
        length = min(max(length, hsa.min_length), hsa.max_length)
        return FaultEffect(length, wound_excess, 2.0)

    # buckle: extension angle relative to the shifted neutral, onset at the shift
    desired = commanded_angle + fault.buckle_offset
    onset = fault.buckle_offset
    if desired >= onset:
        excess = max(wound_excess, desired - onset)
        effective = onset
    elif desired <= onset - wound_excess:
        excess = 0.0
        effective = desired
    else:
        excess = wound_excess
        effective = onset
    length = hsa.nominal_length + hsa.extension_rate * effective
    length = min(max(length, hsa.min_length), hsa.max_length)
    return FaultEffect(length, excess, 1.0)


def hexagon_edge_normals() -> np.ndarray:
    """Outward unit normals of the hexagon edges (vertices on the x axis)."""
    az = math.pi / 6.0 + math.pi / 3.0 * np.arange(6)
    return np.column_stack([np.cos(az), np.sin(az)])


def hexagon_vertices(circumradius: float) -> np.ndarray:
    az = math.pi / 3.0 * np.arange(6)
    return circumradius * np.column_stack([np.cos(az), np.sin(az)])


def second_order_propagator(natural_freq: float, damping_ratio: float, dt: float) -> np.ndarray:
    """Exact discrete transition for the underdamped strut response.

    Propagates ``(len - target, d len/dt)`` over one substep with the target
    held constant, so a step command reproduces the analytic overshoot and
    settling to machine precision.
    """
    wn, z = natural_freq, damping_ratio
    wd = wn * math.sqrt(1.0 - z * z)
    decay = math.exp(-z * wn * dt)
    c, s = math.cos(wd * dt), math.sin(wd * dt)
    return decay * np.array([
        [c + z * wn * s / wd, s / wd],
        [-wn * wn * s / wd, c - z * wn * s / wd],
    ])


class Simulator:
    """Single-threaded plate+puck simulator stepped in 1/240 s substeps.

    Not shareable across threads; run one instance per deployment and give
    parallel workers distinct seeds.
    """

    def __init__(
        self,
        geo: PlatformGeometry,
        hsas: tuple[HsaParams, ...],
        params: PhysicsParams,
        fault: FaultConfig = FaultConfig(),
        seed: int | np.random.SeedSequence = 0,
        puck_start: tuple[float, float] = (0.0, 0.0),
    ):
        if len(hsas) != 6:
            raise InvalidInputError("need one HsaParams per strut")
        self.geo = geo
        self.hsas = tuple(hsas)
        self.params = params
        self.fault = fault
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        strut_seq, sensor_seq = seq.spawn(2)
        self._strut_rng = np.random.Generator(np.random.PCG64(strut_seq))
        self._sensor_rng = np.random.Generator(np.random.PCG64(sensor_seq))

        self._propagator = second_order_propagator(
            params.strut_natural_freq, params.strut_damping_ratio, params.physics_dt)
        self._len_lo = np.array([h.min_length for h in self.hsas])
        self._len_hi = np.array([h.max_length for h in self.hsas])
        self._wall_normals = hexagon_edge_normals()
        self.contain_inradius = geo.plate_inradius - params.puck_radius
        self._substeps_per_read = int(round(1.0 / SENSOR_HZ / params.physics_dt))
        self._substep_count = 0

        from .geometry import inverse_kinematics  # nominal rest lengths
        rest = inverse_kinematics(geo.nominal_pose(), geo)
        state = SimState(
            puck_pos=np.array(puck_start, dtype=float),
            puck_vel=np.zeros(2),
            strut_len=rest.copy(),
            strut_len_target=rest.copy(),
            strut_vel=np.zeros(6),
            plate_pose=PlatformPose(),
        )
        state.plate_pose = self._pose_from_lengths(rest)
        self._clamp_to_walls(state)
        self.state = state

    # -- geometry helpers -------------------------------------------------

    def strut_endpoints(self, lengths: np.ndarray) -> np.ndarray:
        """Top endpoint of each strut: base anchor raised by the strut length."""
        pts = self.geo.base_anchors.copy()
        pts[2] += lengths
        return pts

    def _pose_from_lengths(self, lengths: np.ndarray) -> PlatformPose:
        fit = plane_fit(self.strut_endpoints(lengths))
        return PlatformPose(roll=fit.roll, pitch=fit.pitch, yaw=0.0,
                            translation=(0.0, 0.0, fit.height))

    def _clamp_to_walls(self, state: SimState) -> None:
        for nx, ny in self._wall_normals:
            proj = nx * state.puck_pos[0] + ny * state.puck_pos[1]
            if proj > self.contain_inradius:
                over = proj - self.contain_inradius
                state.puck_pos[0] -= over * nx
                state.puck_pos[1] -= over * ny

    # -- core stepping -----------------------------------------------------

    def step_substep(self, commanded_angles: np.ndarray, env_step: int) -> None:
        self.state = step_physics(
            self.state, commanded_angles, self.geo, self.hsas, self.params,
            self.fault, env_step, self.params.physics_dt, self._strut_rng,
            self._propagator, self._len_lo, self._len_hi, self._wall_normals,
            self.contain_inradius,
        )
        self._substep_count += 1

    def run_control_period(
        self, commanded_angles: np.ndarray, env_step: int, n_substeps: int,
    ) -> list[tuple[np.ndarray, tuple[float, float, float]]]:
        """Advance one control period; returns the sensor reads that occurred."""
        reads = []
        for _ in range(n_substeps):
            self.step_substep(commanded_angles, env_step)
            if self._substep_count % self._substeps_per_read == 0:
                reads.append(self.read_sensors())
        return reads

    def read_sensors(self) -> tuple[np.ndarray, tuple[float, float, float]]:
        """Noisy puck position plus exact plate Euler angles (60 Hz cadence)."""
        noise = self._sensor_rng.normal(0.0, 1.0, 2) * self.params.sensor_noise_std
        pose = self.state.plate_pose
        return self.state.puck_pos + noise, (pose.roll, pose.pitch, pose.yaw)

    def place_puck(self, pos: tuple[float, float], vel: tuple[float, float] = (0.0, 0.0)) -> None:
        """Scripted intervention: teleport the puck (logged by the caller)."""
        self.state.puck_pos = np.array(pos, dtype=float)
        self.state.puck_vel = np.array(vel, dtype=float)
        self._clamp_to_walls(self.state)

    # -- snapshot / restore (for resuming evaluation) ----------------------

    def snapshot(self) -> dict:
        s = self.state
        return {
            "puck_pos": s.puck_pos.copy(), "puck_vel": s.puck_vel.copy(),
            "strut_len": s.strut_len.copy(), "strut_len_target": s.strut_len_target.copy(),
            "strut_vel": s.strut_vel.copy(), "buckle_excess": s.buckle_excess.copy(),
            "sim_time": s.sim_time, "fault_active": s.fault_active,
            "substep_count": self._substep_count,
            "strut_rng": repr(self._strut_rng.bit_generator.state),
            "sensor_rng": repr(self._sensor_rng.bit_generator.state),
        }

    def restore(self, snap: dict) -> None:
        import ast
        st = self.state
        st.puck_pos = np.array(snap["puck_pos"], dtype=float)
        st.puck_vel = np.array(snap["puck_vel"], dtype=float)
        st.strut_len = np.array(snap["strut_len"], dtype=float)
        st.strut_len_target = np.array(snap["strut_len_target"], dtype=float)
        st.strut_vel = np.array(snap["strut_vel"], dtype=float)
        st.buckle_excess = np.array(snap["buckle_excess"], dtype=float)
        st.sim_time = float(snap["sim_time"])
        st.fault_active = bool(snap["fault_active"])
        st.plate_pose = self._pose_from_lengths(st.strut_len)
        self._substep_count = int(snap["substep_count"])
        self._strut_rng.bit_generator.state = ast.literal_eval(str(snap["strut_rng"]))
        self._sensor_rng.bit_generator.state = ast.literal_eval(str(snap["sensor_rng"]))


def step_physics(
    state: SimState,
    commanded_angles: np.ndarray,
    geo: PlatformGeometry,
    hsas: tuple[HsaParams, ...],
    params: PhysicsParams,
    fault: FaultConfig,
    env_step: int,
    dt: float,
    rng: np.random.Generator,
    propagator: np.ndarray | None = None,
    len_lo: np.ndarray | None = None,
    len_hi: np.ndarray | None = None,
    wall_normals: np.ndarray | None = None,
    contain_inradius: float | None = None,
) -> SimState:
    """One physics substep; returns the successor state.

    Order: fault-modified strut targets (plus actuation jitter), exact
    second-order strut update, plane fit, puck forces with stiction, then
    semi-implicit Euler and wall resolution.
    """
    cmd = np.asarray(commanded_angles, dtype=float)
    if cmd.shape != (6,) or not np.isfinite(cmd).all():
        raise InvalidInputError("commanded_angles must be six finite values")
    if propagator is None:
        propagator = second_order_propagator(
            params.strut_natural_freq, params.strut_damping_ratio, dt)
    if len_lo is None:
        len_lo = np.array([h.min_length for h in hsas])
        len_hi = np.array([h.max_length for h in hsas])
    if wall_normals is None:
        wall_normals = hexagon_edge_normals()
    if contain_inradius is None:
        contain_inradius = geo.plate_inradius - params.puck_radius

    nxt = state.copy()

    # strut targets through the fault map
    targets = np.empty(6)
    noise_scale = np.empty(6)
    for i in range(6):
        eff = apply_fault(cmd[i], i, hsas[i], fault, env_step, state.buckle_excess[i])
        targets[i] = eff.target_length
        noise_scale[i] = eff.noise_scale
        nxt.buckle_excess[i] = eff.wound_excess
    fault_active = fault.kind != "none" and env_step >= fault.trigger_step
    jitter = rng.normal(0.0, 1.0, 6) * (params.strut_noise_std * noise_scale)
    targets = np.clip(targets + jitter, len_lo, len_hi)
    nxt.strut_len_target = targets
    nxt.fault_active = fault_active

    # exact underdamped step toward the held target
    offset = np.vstack([state.strut_len - targets, state.strut_vel])
    offset = propagator @ offset
    new_len = offset[0] + targets
    new_vel = offset[1]
    low = new_len < len_lo
    high = new_len > len_hi
    new_len = np.clip(new_len, len_lo, len_hi)
    new_vel[low & (new_vel < 0.0)] = 0.0
    new_vel[high & (new_vel > 0.0)] = 0.0
    nxt.strut_len = new_len
    nxt.strut_vel = new_vel

    # plate pose follows the strut endpoints
    endpoints = geo.base_anchors.copy()
    endpoints[2] += new_len
    fit = plane_fit(endpoints)
    nxt.plate_pose = PlatformPose(roll=fit.roll, pitch=fit.pitch, yaw=0.0,
                                  translation=(0.0, 0.0, fit.height))

    # puck: in-plane gravity projection vs friction
    g = params.gravity
    cr, sr = math.cos(fit.roll), math.sin(fit.roll)
    cp, sp = math.cos(fit.pitch), math.sin(fit.pitch)
    drive_x = g * sp * cr
    drive_y = -g * sr
    normal_acc = g * cp * cr
    vx, vy = float(state.puck_vel[0]), float(state.puck_vel[1])
    speed = math.hypot(vx, vy)
    drive = math.hypot(drive_x, drive_y)

    if speed <= params.stick_speed and drive <= params.mu_static * normal_acc:
        nxt.puck_vel[:] = 0.0
    else:
        resist = (params.mu_kinetic + params.rolling_coeff) * normal_acc
        if speed > 1e-12:
            ux, uy = vx / speed, vy / speed
        else:
            ux, uy = (drive_x / drive, drive_y / drive) if drive > 1e-12 else (0.0, 0.0)
        ax = drive_x - resist * ux
        ay = drive_y - resist * uy
        new_vx = vx + ax * dt
        new_vy = vy + ay * dt
        # friction must not reverse the velocity within a substep
        if speed > 1e-12 and new_vx * vx + new_vy * vy < 0.0 and drive < resist:
            new_vx = new_vy = 0.0
        nxt.puck_vel[0] = new_vx
        nxt.puck_vel[1] = new_vy
        nxt.puck_pos[0] = state.puck_pos[0] + new_vx * dt
        nxt.puck_pos[1] = state.puck_pos[1] + new_vy * dt

    # hexagonal wall: project back inside, reflect the normal velocity
    for nx_, ny_ in wall_normals:
        proj = nx_ * nxt.puck_pos[0] + ny_ * nxt.puck_pos[1]
        if proj > contain_inradius:
            over = proj - contain_inradius
            nxt.puck_pos[0] -= over * nx_
            nxt.puck_pos[1] -= over * ny_
            vn = nx_ * nxt.puck_vel[0] + ny_ * nxt.puck_vel[1]
            if vn > 0.0:
                scale = (1.0 + params.wall_restitution) * vn
                nxt.puck_vel[0] -= scale * nx_
                nxt.puck_vel[1] -= scale * ny_

    nxt.sim_time = state.sim_time + dt
    return nxt
