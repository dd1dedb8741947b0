"""Mini-CNN building blocks with explicit forward caches and exact
reverse-mode gradients (double precision throughout)."""

import math

import numpy as np


def he_uniform(rng, shape, fan_in: int) -> np.ndarray:
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Same-padded 3x3 convolution via im2col; x is (N, C, H, W)."""
    n, c, h, wd = x.shape
    out_c = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((n, c, 9, h, wd), dtype=np.float64)
    k = 0
    for di in range(3):
        for dj in range(3):
            cols[:, :, k] = xp[:, :, di : di + h, dj : dj + wd]
            k += 1
    cols_mat = cols.transpose(0, 3, 4, 1, 2).reshape(n * h * wd, c * 9)
    out = cols_mat @ w.reshape(out_c, c * 9).T + b
    out = out.reshape(n, h, wd, out_c).transpose(0, 3, 1, 2)
    return out, (x.shape, cols_mat)


def conv3x3_backward(dout: np.ndarray, cache, w: np.ndarray):
    (n, c, h, wd), cols_mat = cache
    out_c = w.shape[0]
    dflat = dout.transpose(0, 2, 3, 1).reshape(n * h * wd, out_c)
    dw = (dflat.T @ cols_mat).reshape(w.shape)
    db = dflat.sum(axis=0)
    dcols = (dflat @ w.reshape(out_c, c * 9)).reshape(n, h, wd, c, 9).transpose(0, 3, 4, 1, 2)
    dxp = np.zeros((n, c, h + 2, wd + 2))
    k = 0
    for di in range(3):
        for dj in range(3):
            dxp[:, :, di : di + h, dj : dj + wd] += dcols[:, :, k]
            k += 1
    return dxp[:, :, 1 : h + 1, 1 : wd + 1], dw, db


class Layer:
    """Stateless compute node; parameters (if any) live in self.params."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.frozen = False

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dout, cache):
        raise NotImplementedError


class Conv3x3(Layer):
    def __init__(self, in_ch: int, out_ch: int, rng):
        super().__init__()
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.params = {
            "w": he_uniform(rng, (out_ch, in_ch, 3, 3), fan_in=in_ch * 9),
            "b": np.zeros(out_ch),
        }

    def forward(self, x):
        return conv3x3_forward(x, self.params["w"], self.params["b"])

    def backward(self, dout, cache):
        dx, dw, db = conv3x3_backward(dout, cache, self.params["w"])
        return dx, {"w": dw, "b": db}


class ReLU(Layer):
    def forward(self, x):
        return np.maximum(x, 0.0), x > 0

    def backward(self, dout, cache):
        return dout * cache, {}


class MaxPool2(Layer):
    """2x2 max pooling, stride 2; odd trailing rows/cols are dropped."""

    def forward(self, x):
        n, c, h, w = x.shape
        h2, w2 = h // 2, w // 2
        xc = x[:, :, : h2 * 2, : w2 * 2]
        windows = xc.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
        idx = windows.argmax(axis=4)
        out = np.take_along_axis(windows, idx[..., None], axis=4)[..., 0]
        return out, (x.shape, idx)

    def backward(self, dout, cache):
        (n, c, h, w), idx = cache
        h2, w2 = h // 2, w // 2
        dwin = np.zeros((n, c, h2, w2, 4))
        np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=4)
        dxc = dwin.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2 * 2, w2 * 2)
        dx = np.zeros((n, c, h, w))
        dx[:, :, : h2 * 2, : w2 * 2] = dxc
        return dx, {}


class ResidualBlock(Layer):
    """relu(conv3x3(x) + x); an identity map when the conv is zeroed and
    the input is nonnegative."""

    def __init__(self, ch: int, rng):
        super().__init__()
        self.ch = ch
        self.params = {
            "w": he_uniform(rng, (ch, ch, 3, 3), fan_in=ch * 9),
            "b": np.zeros(ch),
        }

    def forward(self, x):
        conv_out, conv_cache = conv3x3_forward(x, self.params["w"], self.params["b"])
        pre = conv_out + x
        return np.maximum(pre, 0.0), (conv_cache, pre > 0)

    def backward(self, dout, cache):
        conv_cache, mask = cache
        dpre = dout * mask
        dx_conv, dw, db = conv3x3_backward(dpre, conv_cache, self.params["w"])
        return dx_conv + dpre, {"w": dw, "b": db}


class GlobalAvgPool(Layer):
    def forward(self, x):
        return x.mean(axis=(2, 3)), x.shape

    def backward(self, dout, cache):
        n, c, h, w = cache
        return np.broadcast_to(dout[:, :, None, None], (n, c, h, w)) / (h * w), {}


class Dense(Layer):
    def __init__(self, in_features: int, out_features: int, rng):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.params = {
            "w": he_uniform(rng, (out_features, in_features), fan_in=in_features),
            "b": np.zeros(out_features),
        }

    def forward(self, x):
        return x @ self.params["w"].T + self.params["b"], x

    def backward(self, dout, cache):
        dx = dout @ self.params["w"]
        dw = dout.T @ cache
        db = dout.sum(axis=0)
        return dx, {"w": dw, "b": db}
