import numpy as np

# widest float numpy offers; 80-bit on x86-64, plain float64 on some platforms
EXTENDED = np.dtype(np.longdouble)


class ParamStore:
    """Named parameter arrays with one gradient buffer each.

    Iteration is in sorted-name order so that flattening, checkpointing and
    optimizer updates are deterministic.
    """

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self._params = {}
        self._grads = {}

    def add(self, name, value):
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        value = np.array(value, dtype=self.dtype, order="C", copy=True)
        self._params[name] = value
        self._grads[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self, prefix=""):
        return sorted(n for n in self._params if n.startswith(prefix))

    def items(self):
        for name in self.names():
            yield name, self._params[name]

    def grad(self, name):
        return self._grads[name]

    def accumulate(self, name, g):
        self._grads[name] += g

    def zero_grads(self):
        for g in self._grads.values():
            g.fill(0.0)

    def set(self, name, value):
        """Overwrite a parameter in place, keeping its shape and dtype."""
        target = self._params[name]
        value = np.asarray(value, dtype=self.dtype)
        if value.shape != target.shape:
            raise ValueError(f"shape mismatch for {name}: {value.shape} vs {target.shape}")
        target[...] = value

    def size(self):
        return sum(p.size for p in self._params.values())

    def copy(self, dtype=None):
        out = ParamStore(self.dtype if dtype is None else dtype)
        for name, value in self.items():
            out.add(name, value)
        return out

    def equal(self, other):
        """Same names, dtype, shapes and bytes."""
        if self.names() != other.names() or np.dtype(self.dtype) != np.dtype(other.dtype):
            return False
        return all(self[n].shape == other[n].shape and self[n].tobytes() == other[n].tobytes()
                   for n in self.names())
