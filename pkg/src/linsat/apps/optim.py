"""Minimal first-order optimizer shared by the demos."""

import numpy as np


class Adam:
    """Plain Adam on a single parameter array."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m1 = self.m2 = None

    def step(self, param, grad):
        if self.m1 is None:
            self.m1 = np.zeros_like(param)
            self.m2 = np.zeros_like(param)
        self.t += 1
        self.m1 = self.beta1 * self.m1 + (1 - self.beta1) * grad
        self.m2 = self.beta2 * self.m2 + (1 - self.beta2) * grad**2
        mh = self.m1 / (1 - self.beta1**self.t)
        vh = self.m2 / (1 - self.beta2**self.t)
        return param - self.lr * mh / (np.sqrt(vh) + self.eps)
