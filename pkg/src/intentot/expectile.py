"""Asymmetric expectile weight shared by intent training and tabular IQL."""
from __future__ import annotations

import numpy as np


def expectile_weight(tau: float, advantage):
    """|tau - 1(advantage < 0)|: tau when A >= 0, 1 - tau when A < 0."""
    return np.abs(tau - (np.asarray(advantage) < 0.0))
