"""Stopping time tau_m = first time |psi| + |Dxi| reaches m (spectral norms)."""

from typing import Iterable, Optional

from pydantic import BaseModel

from ..flow.integrator import FlowState


class StoppingReport(BaseModel):
    tau: float
    m: float
    level: Optional[int] = None
    stopped: bool = False


def flow_distortion(state: FlowState) -> float:
    """sup over nodes of |psi(t, x)| + |Dxi(t, x)|."""
    return float((state.inverse_norm() + state.jacobian_norm()).max())


class StoppingMonitor:
    """Tracks tau_m while flow levels stream past."""

    def __init__(self, m: float):
        if m <= 0:
            raise ValueError("threshold m must be positive")
        self.m = m
        self.tau: Optional[float] = None
        self.level: Optional[int] = None
        self._seen = 0
        self._last_t = 0.0

    def update(self, state: FlowState) -> bool:
        """Feed the next level; returns True once the threshold has been reached."""
        if self.tau is None and flow_distortion(state) >= self.m:
            self.tau = state.t
            self.level = self._seen
        self._seen += 1
        self._last_t = state.t
        return self.tau is not None

    def report(self, T: Optional[float] = None) -> StoppingReport:
        if self.tau is not None:
            return StoppingReport(tau=self.tau, m=self.m, level=self.level, stopped=True)
        return StoppingReport(tau=self._last_t if T is None else T, m=self.m)


def stopping_time_first_exceed(traj: Iterable[FlowState], m: float, T: Optional[float] = None) -> StoppingReport:
    monitor = StoppingMonitor(m)
    for state in traj:
        if monitor.update(state):
            break
    return monitor.report(T)
