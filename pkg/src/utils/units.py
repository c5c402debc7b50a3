"""Unit conversions applied once, at load time."""
import math

BITS_PER_MBIT = 1e6


def dbm_to_watts(dbm: float) -> float:
    """Convert a power level in dBm to watts."""
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    """Convert watts to dBm."""
    return 10.0 * math.log10(watts) + 30.0


def db_to_linear(db: float) -> float:
    """Convert a ratio in dB to a linear factor."""
    return 10.0 ** (db / 10.0)


def mbit_to_bits(mbit: float) -> float:
    return mbit * BITS_PER_MBIT


def bits_to_mbit(bits: float) -> float:
    return bits / BITS_PER_MBIT
