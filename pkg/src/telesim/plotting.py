"""Step-response and Bode plots written as standalone SVG files.

Output is byte-stable: no timestamps, fixed SVG id salt.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# Environment red-dashed, participant blue-solid; anything else cycles.
STYLES = {
    "environment": dict(color="tab:red", linestyle="--"),
    "participant": dict(color="tab:blue", linestyle="-"),
}
_FALLBACK = ["tab:green", "tab:purple", "tab:orange", "tab:brown"]

_RC = {"svg.hashsalt": "telesim", "svg.fonttype": "path", "path.simplify": False}


def _style(label, i):
    return STYLES.get(label.lower(), dict(color=_FALLBACK[i % len(_FALLBACK)], linestyle="-"))


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": "telesim"})
    plt.close(fig)


def plot_step(traces, path, title="Step response"):
    """``traces`` is a list of ``(label, t, y)``."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        for i, (label, t, y) in enumerate(traces):
            ax.plot(t, y, label=label.capitalize(), **_style(label, i))
        ax.set_xlabel("Time [s]")
        ax.set_ylabel("Angle per unit torque [rad/(N m)]")
        ax.set_title(title)
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        _save(fig, path)


def plot_bode(traces, path, title="Bode diagram"):
    """``traces`` is a list of ``(label, omega, magnitude_db, phase_deg)``."""
    with plt.rc_context(_RC):
        fig, (ax_mag, ax_phase) = plt.subplots(2, 1, sharex=True, figsize=(6, 6))
        for i, (label, w, mag, phase) in enumerate(traces):
            style = _style(label, i)
            ax_mag.semilogx(w, mag, label=label.capitalize(), **style)
            ax_phase.semilogx(w, phase, **style)
        ax_mag.set_ylabel("Magnitude [dB]")
        ax_phase.set_ylabel("Phase [deg]")
        ax_phase.set_xlabel("Frequency [rad/s]")
        ax_mag.set_title(title)
        for ax in (ax_mag, ax_phase):
            ax.grid(True, which="both", alpha=0.3)
        ax_mag.legend()
        fig.tight_layout()
        _save(fig, path)
