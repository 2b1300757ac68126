"""Loss functions. Shapes are validated strictly before any arithmetic."""


def shape_of(values):
    """Nested-list shape, e.g. [[1.0], [2.0]] -> (2, 1)."""
    if not isinstance(values, list):
        return ()
    if not values:
        return (0,)
    inner = shape_of(values[0])
    return (len(values),) + inner


class Loss:
    """Scalar loss with a recorded backward closure."""

    def __init__(self, value, backward_fn):
        self.value = value
        self._backward_fn = backward_fn

    def backward(self):
        self._backward_fn()

    def __float__(self):
        return float(self.value)


def mse_loss(predictions, targets, model):
    pred_shape = shape_of(predictions)
    target_shape = shape_of(targets)
    if pred_shape != target_shape:
        raise ValueError(
            f"shape mismatch: expected {pred_shape}, got {target_shape}"
        )
    total = 0.0
    count = 0
    for pred_row, target_row in zip(predictions, targets):
        for p, t in zip(pred_row, target_row):
            total += (p - t) ** 2
            count += 1
    value = total / max(count, 1)

    def backward_fn():
        # gradients are not needed to surface the bug; fill with the mean error
        scale = value / max(count, 1)
        model.weight_grad = [
            [scale for _ in range(model.in_features)] for _ in range(model.out_features)
        ]
        model.bias_grad = [scale for _ in range(model.out_features)]

    return Loss(value, backward_fn)
