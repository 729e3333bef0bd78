"""Heat flow in correlated qubit chains: states, dynamics, circuits and calibration."""

from . import calibrate, densemat, dynamics, expctl, qcircuit, thermostate

__all__ = ["calibrate", "densemat", "dynamics", "expctl", "qcircuit", "thermostate"]
