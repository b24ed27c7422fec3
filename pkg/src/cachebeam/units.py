"""dB/linear conversion helpers shared across modules."""

import numpy as np


def db_to_lin(x_db):
    """Power ratio from dB."""
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def lin_to_db(x_lin, floor: float = 1e-300):
    """dB from a linear power ratio (floored to avoid log of zero)."""
    return 10.0 * np.log10(np.maximum(np.asarray(x_lin, dtype=float), floor))


def dbm_to_watts(x_dbm):
    """Watts from dBm."""
    return 10.0 ** ((np.asarray(x_dbm, dtype=float) - 30.0) / 10.0)
