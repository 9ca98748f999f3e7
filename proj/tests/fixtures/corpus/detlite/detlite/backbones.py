import torch.nn as nn

from .registry import BACKBONES


@BACKBONES.register()
class ResStage(nn.Module):
    def __init__(self, channels=8, depth=2):
        super().__init__()
        self.blocks = nn.ModuleList(nn.Conv2d(channels, channels, 3, padding=1) for _ in range(depth))

    def forward(self, x):
        for block in self.blocks:
            x = x + block(x).relu()
        return x


class ConvBNAct(nn.Module):
    def __init__(self, c=8):
        super().__init__()
        self.conv = nn.Conv2d(c, c, 1)

    def forward(self, x):
        return self.conv(x)


def make_base(kind):
    return nn.Module if kind == "plain" else nn.Sequential


class DynamicHead(make_base("plain")):
    def forward(self, x):
        return x
