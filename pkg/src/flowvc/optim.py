"""AdamW (decoupled weight decay) over autodiff Tensors."""

import numpy as np


class AdamW:
    """Standard Adam moments with decoupled weight decay.

    update: p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
    """

    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ValueError("gradient/parameter shape mismatch")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data -= self.lr * update

    def state_arrays(self):
        """Optimizer state as (t, [m...], [v...]) for checkpointing."""
        return self.t, self.m, self.v

    def load_state_arrays(self, t, ms, vs):
        if len(ms) != len(self.params) or len(vs) != len(self.params):
            raise ValueError("optimizer state does not match parameter list")
        self.t = int(t)
        for buf, src in zip(self.m, ms):
            buf[...] = src
        for buf, src in zip(self.v, vs):
            buf[...] = src
