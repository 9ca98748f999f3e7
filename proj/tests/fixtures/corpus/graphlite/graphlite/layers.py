from typing import Optional

import torch
from torch import nn

from .utils import glorot as init_weights


class MessagePassing(nn.Module):
    def propagate(self, adj, x):
        return adj @ x

    def forward(self, x, adj):
        raise NotImplementedError


class GCNLayer(MessagePassing):
    def __init__(self, in_dim: int, out_dim: int, bias: Optional[bool] = True):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(in_dim, out_dim))
        self.bias = nn.Parameter(torch.zeros(out_dim)) if bias else None
        self.reset_parameters()

    def reset_parameters(self):
        init_weights(self.weight)

    def forward(self, x, adj):
        out = self.propagate(adj, x @ self.weight)
        return out if self.bias is None else out + self.bias


class FeatureStore(nn.Module):
    def __init__(self):
        super().__init__()
        self.cache = {}
