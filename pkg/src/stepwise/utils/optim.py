import numpy as np


class Sgd:
    """Plain gradient descent over one or more modules."""

    def __init__(self, modules, lr):
        self.modules = list(modules)
        self.lr = lr

    def _pairs(self):
        for m, module in enumerate(self.modules):
            params = module.named_parameters()
            grads = module.named_gradients()
            for (name, p), (_, g) in zip(params, grads):
                yield f"{m}.{name}", p, g

    def zero_grad(self):
        for module in self.modules:
            module.zero_grad()

    def step(self):
        for _, p, g in self._pairs():
            p -= self.lr * g


class Adam(Sgd):
    """Adam with bias correction; moments are keyed by parameter name."""

    BETA1 = 0.9
    BETA2 = 0.999
    EPS = 1e-8

    def __init__(self, modules, lr, beta1=BETA1, beta2=BETA2, eps=EPS):
        super().__init__(modules, lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for key, p, g in self._pairs():
            if key not in self.m:
                self.m[key] = np.zeros_like(p)
                self.v[key] = np.zeros_like(p)
            m, v = self.m[key], self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
