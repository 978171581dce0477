"""Causal low-pass filtering of landmark coordinate channels.

All coordinate channels (world x/y/z and normalized u/v, every joint) run
through coefficient-identical Butterworth low-pass filters so the group
delay matches across every signal that is fused downstream. A OneEuro-style
adaptive filter would have lower latency but per-channel adaptive delay
distorts the fusion, so a fixed-coefficient IIR is used instead.

The filter runs as cascaded second-order sections (transposed direct form
II) for numerical stability. Filter memory is seeded with the first
sample's steady state, as if that value had been held forever, which
removes the startup transient for streams that begin mid-motion. Non-finite
samples are rejected: the channel holds its previous output, the state does
not advance, and the gap is counted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import ConfigError


@dataclass(frozen=True)
class FilterSpec:
    order: int = 4
    cutoff_hz: float = 10.0
    sample_hz: float = 30.0

    def __post_init__(self):
        if self.order < 1:
            raise ConfigError("filter order must be >= 1")
        if not (0.0 < self.cutoff_hz < self.sample_hz / 2.0):
            raise ConfigError(
                f"cutoff {self.cutoff_hz} Hz must lie in (0, Nyquist={self.sample_hz / 2.0} Hz)")


def design_butterworth(spec: FilterSpec) -> np.ndarray:
    """Butterworth low-pass coefficients as second-order sections.

    Returns an (n_sections, 6) array of [b0, b1, b2, 1, a1, a2] rows with
    unity DC gain. The bilinear design prewarps the cutoff so the -3 dB
    point lands exactly at ``cutoff_hz``.
    """
    sos = signal.butter(spec.order, spec.cutoff_hz, btype="low",
                        fs=spec.sample_hz, output="sos")
    return np.asarray(sos, dtype=np.float64)


def _steady_state(sos: np.ndarray, value: np.ndarray) -> np.ndarray:
    """Section states as if ``value`` had been the input forever.

    Transposed direct form II per section:
        y  = b0*x + z1
        z1 = b1*x - a1*y + z2
        z2 = b2*x - a2*y
    With constant input x the section output settles at g*x where
    g = (b0+b1+b2)/(1+a1+a2); the state follows in closed form.
    """
    n_sections = sos.shape[0]
    x = np.atleast_1d(np.asarray(value, dtype=np.float64))
    state = np.zeros((n_sections, 2, x.shape[0]), dtype=np.float64)
    for s in range(n_sections):
        b0, b1, b2, _, a1, a2 = sos[s]
        g = (b0 + b1 + b2) / (1.0 + a1 + a2)
        y = g * x
        z2 = b2 * x - a2 * y
        z1 = b1 * x - a1 * y + z2
        state[s, 0] = z1
        state[s, 1] = z2
        x = y
    return state


class ChannelBankFilter:
    """One Butterworth filter per channel, stepped a frame at a time.

    All channels share the same coefficients (equal group delay); each
    channel owns independent state. The bank is single-owner mutable; one
    bank per stream session.
    """

    def __init__(self, spec: FilterSpec, n_channels: int):
        self.spec = spec
        self.sos = design_butterworth(spec)
        self.n_channels = n_channels
        self._state: np.ndarray | None = None
        self._last_output = np.full(n_channels, np.nan, dtype=np.float64)
        self.gap_count = 0

    def reset(self) -> None:
        """Zero memory; the next sample re-seeds steady state."""
        self._state = None
        self._last_output = np.full(self.n_channels, np.nan, dtype=np.float64)
        self.gap_count = 0

    def step(self, samples: np.ndarray) -> np.ndarray:
        """Advance every channel by one sample and return filtered values.

        Channels with non-finite input hold their previous output and keep
        their state unchanged (the gap counter increments once per bad
        channel-sample).
        """
        x = np.asarray(samples, dtype=np.float64)
        if x.shape != (self.n_channels,):
            raise ValueError(f"expected {self.n_channels} channels, got {x.shape}")
        good = np.isfinite(x)
        self.gap_count += int(np.count_nonzero(~good))

        if self._state is None:
            if not np.all(good):
                # Cannot seed from a broken first frame; hold NaNs until a
                # finite sample arrives per channel.
                seed = np.where(good, x, 0.0)
                self._state = _steady_state(self.sos, seed)
                out = np.where(good, x, np.nan)
                self._last_output = out
                return out.copy()
            self._state = _steady_state(self.sos, x)
            self._last_output = x.copy()
            return x.copy()

        state = self._state
        xs = x.copy()
        new_state = state.copy()
        for s in range(self.sos.shape[0]):
            b0, b1, b2, _, a1, a2 = self.sos[s]
            y = b0 * xs + state[s, 0]
            new_state[s, 0] = b1 * xs - a1 * y + state[s, 1]
            new_state[s, 1] = b2 * xs - a2 * y
            xs = y

        out = np.where(good, xs, self._last_output)
        # Bad channels keep their previous state.
        self._state = np.where(good[None, None, :], new_state, state)
        self._last_output = out
        return out.copy()


class ScalarFilter:
    """Single-channel convenience wrapper around ChannelBankFilter."""

    def __init__(self, spec: FilterSpec):
        self._bank = ChannelBankFilter(spec, 1)

    def reset(self) -> None:
        self._bank.reset()

    def step(self, sample: float) -> float:
        return float(self._bank.step(np.array([sample]))[0])

    @property
    def gap_count(self) -> int:
        return self._bank.gap_count


class FrameFilter:
    """Filters the world and normalized channels of a landmark frame stream."""

    def __init__(self, spec: FilterSpec, n_joints: int):
        self.n_joints = n_joints
        self._world = ChannelBankFilter(spec, n_joints * 3)
        self._norm = ChannelBankFilter(spec, n_joints * 2)

    def reset(self) -> None:
        self._world.reset()
        self._norm.reset()

    def step(self, world: np.ndarray, normalized: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        w = self._world.step(np.asarray(world, dtype=np.float64).reshape(-1))
        n = self._norm.step(np.asarray(normalized, dtype=np.float64).reshape(-1))
        return w.reshape(self.n_joints, 3), n.reshape(self.n_joints, 2)

    @property
    def gap_count(self) -> int:
        return self._world.gap_count + self._norm.gap_count
