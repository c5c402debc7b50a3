"""Link models: probabilistic LoS air-to-ground channel and free-space UAV-HAP link.

Functions accept scalars or numpy arrays and evaluate elementwise.
"""
import math
from typing import Tuple, Union

import numpy as np

from src.models.scenario import ChannelParams, Position3D
from src.utils.exceptions import DomainError

ArrayLike = Union[float, np.ndarray]

_ANGLE_TOL = 1e-9


def los_probability(theta: ArrayLike, a: float, b: float) -> ArrayLike:
    """
    Line-of-sight probability at elevation ``theta`` (degrees).

    Args:
        theta: Elevation angle in [0, 90] degrees
        a: Environment constant
        b: Environment constant, per degree

    Raises:
        DomainError: If any angle lies outside [0, 90]
    """
    theta_arr = np.asarray(theta, dtype=float)
    if np.any(theta_arr < -_ANGLE_TOL) or np.any(theta_arr > 90.0 + _ANGLE_TOL):
        raise DomainError("Elevation angle must lie in [0, 90] degrees")
    result = 1.0 / (1.0 + a * np.exp(-b * (theta_arr - a)))
    return float(result) if np.ndim(result) == 0 else result


def elevation_angle(horizontal: ArrayLike, height: float) -> ArrayLike:
    """Elevation in degrees seen from the ground at horizontal distance ``horizontal``."""
    return np.degrees(np.arctan2(height, horizontal))


def air_to_ground_gain(horizontal: ArrayLike, height: float, ch: ChannelParams) -> ArrayLike:
    """[P_LoS + (1 - P_LoS) * kappa] * beta0 * d^-alpha for a UAV at ``height``."""
    distance = np.sqrt(np.square(horizontal) + height ** 2)
    p_los = los_probability(elevation_angle(horizontal, height), ch.los_a, ch.los_b)
    mix = p_los + (1.0 - p_los) * ch.nlos_atten
    return mix * ch.beta0 * distance ** (-ch.pathloss_exp)


def gu_uav_gain(gu_pos: Position3D, uav_pos: Position3D, ch: ChannelParams) -> float:
    """
    Channel gain between a ground user and a UAV.

    Args:
        gu_pos: Ground user position
        uav_pos: UAV position (z > 0)
        ch: Channel parameters

    Raises:
        DomainError: If the UAV is not above the ground user's plane
    """
    height = uav_pos.z - gu_pos.z
    if height <= 0:
        raise DomainError("UAV must be above the ground user")
    horizontal = math.hypot(uav_pos.x - gu_pos.x, uav_pos.y - gu_pos.y)
    return float(air_to_ground_gain(horizontal, height, ch))


def rate_gu_uav(gain: ArrayLike, ch: ChannelParams, p_tx: ArrayLike) -> ArrayLike:
    """Uplink rate B^ug * log2(1 + p * g / (sigma^2 + I)) in bits/s."""
    if np.any(np.asarray(gain) < 0):
        raise DomainError("Channel gain must be nonnegative")
    snr = np.asarray(p_tx) * np.asarray(gain) / (ch.noise_power + ch.interference)
    rate = ch.bandwidth_gu * np.log2(1.0 + snr)
    return float(rate) if np.ndim(rate) == 0 else rate


def air_to_ground_rate_and_slope(
    horizontal: np.ndarray,
    height: float,
    ch: ChannelParams,
    p_tx: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Uplink rate and its derivative with respect to horizontal distance.

    Returns:
        (rate, d rate / d horizontal), both shaped like ``horizontal``
    """
    horizontal = np.asarray(horizontal, dtype=float)
    d2 = np.square(horizontal) + height ** 2
    distance = np.sqrt(d2)
    p_los = los_probability(elevation_angle(horizontal, height), ch.los_a, ch.los_b)
    mix = ch.nlos_atten + (1.0 - ch.nlos_atten) * p_los
    path = ch.beta0 * distance ** (-ch.pathloss_exp)
    gain = mix * path

    noise = ch.noise_power + ch.interference
    snr = p_tx * gain / noise
    rate = ch.bandwidth_gu * np.log2(1.0 + snr)

    dtheta = -np.degrees(1.0) * height / d2
    dmix = (1.0 - ch.nlos_atten) * ch.los_b * p_los * (1.0 - p_los) * dtheta
    dpath = -ch.pathloss_exp * horizontal * path / d2
    dgain = dmix * path + mix * dpath
    slope = ch.bandwidth_gu / math.log(2.0) * (p_tx / noise) * dgain / (1.0 + snr)
    return rate, slope


def free_space_loss(distance: ArrayLike, ch: ChannelParams) -> ArrayLike:
    """(c / (4 pi d f_c))^2."""
    return (ch.light_speed / (4.0 * math.pi * np.asarray(distance) * ch.carrier_freq)) ** 2


def hap_link_snr(distance: ArrayLike, ch: ChannelParams, p_tx: ArrayLike) -> ArrayLike:
    thermal = ch.bandwidth_uh * ch.boltzmann * ch.noise_temp
    return np.asarray(p_tx) * ch.antenna_gain * ch.total_loss * free_space_loss(distance, ch) / thermal


def hap_rate_and_slope(
    distance: np.ndarray,
    ch: ChannelParams,
    p_tx: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    UAV-to-HAP rate and its derivative with respect to the 3D distance.

    Returns:
        (rate, d rate / d distance)
    """
    snr = hap_link_snr(distance, ch, p_tx)
    rate = ch.bandwidth_uh * np.log2(1.0 + snr)
    slope = ch.bandwidth_uh / math.log(2.0) * (-2.0 * snr / distance) / (1.0 + snr)
    return rate, slope


def rate_uav_hap(uav_pos: Position3D, hap_pos: Position3D, ch: ChannelParams, p_tx: float) -> float:
    """
    Relay rate from a UAV to the HAP in bits/s.

    Args:
        uav_pos: UAV position
        hap_pos: HAP position
        ch: Channel parameters
        p_tx: UAV transmit power in watts

    Raises:
        DomainError: If the two positions coincide
    """
    distance = float(np.linalg.norm(uav_pos.as_array() - hap_pos.as_array()))
    if distance <= 0.0:
        raise DomainError("UAV and HAP positions must differ")
    return float(ch.bandwidth_uh * np.log2(1.0 + hap_link_snr(distance, ch, p_tx)))
