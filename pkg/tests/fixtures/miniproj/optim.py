"""Gradient descent over the toy model."""


class SGD:
    def __init__(self, model, lr=0.1):
        self.model = model
        self.lr = lr

    def zero_grad(self):
        self.model.zero_grad()

    def step(self):
        model = self.model
        if model.weight_grad is None:
            raise RuntimeError("step() before backward()")
        for j in range(model.out_features):
            for i in range(model.in_features):
                model.weight[j][i] -= self.lr * model.weight_grad[j][i]
            model.bias[j] -= self.lr * model.bias_grad[j]
