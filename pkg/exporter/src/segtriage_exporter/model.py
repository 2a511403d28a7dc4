"""Toy dropout U-Net.

A downscaled U-Net: batch normalization between each pair of
convolutional layers, dropout in the innermost encoder/decoder blocks,
and a softmax head. Running passes with dropout active at inference time
turns the network into a stochastic function whose spread carries the
predictive uncertainty.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


class ConvBlock(nn.Module):
    """(conv -> BN -> ReLU) x2 with optional trailing dropout."""

    def __init__(self, cin: int, cout: int, dropout: float = 0.0):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(cout)
        self.drop = nn.Dropout2d(dropout) if dropout > 0 else nn.Identity()

    def forward(self, x):
        x = F.relu(self.bn1(self.conv1(x)))
        x = F.relu(self.bn2(self.conv2(x)))
        return self.drop(x)


class ToyDropoutUnet(nn.Module):
    """Three-level U-Net with dropout on the three innermost blocks.

    Feature maps double down the contracting path and halve back up, as
    in the full-size architecture, just starting from a small base.
    """

    def __init__(self, num_classes: int, base: int = 8, dropout: float = 0.5):
        super().__init__()
        self.num_classes = num_classes
        self.dropout_rate = dropout
        self.enc1 = ConvBlock(3, base)
        self.enc2 = ConvBlock(base, base * 2, dropout)
        self.bottleneck = ConvBlock(base * 2, base * 4, dropout)
        self.pool = nn.MaxPool2d(2)
        self.up2 = nn.ConvTranspose2d(base * 4, base * 2, 2, stride=2)
        self.dec2 = ConvBlock(base * 4, base * 2, dropout)
        self.up1 = nn.ConvTranspose2d(base * 2, base, 2, stride=2)
        self.dec1 = ConvBlock(base * 2, base)
        self.head = nn.Conv2d(base, num_classes, 1)

    def forward(self, x):
        e1 = self.enc1(x)
        e2 = self.enc2(self.pool(e1))
        b = self.bottleneck(self.pool(e2))
        d2 = self.dec2(torch.cat([self.up2(b), e2], dim=1))
        d1 = self.dec1(torch.cat([self.up1(d2), e1], dim=1))
        return self.head(d1)

    def predict_proba(self, x) -> torch.Tensor:
        """Per-pixel class probabilities for one forward pass."""
        return torch.softmax(self.forward(x), dim=1)


def enable_mc_dropout(model: nn.Module) -> None:
    """Inference mode with dropout still stochastic.

    BatchNorm stays in eval mode (running statistics); only dropout
    layers keep sampling.
    """
    model.eval()
    for module in model.modules():
        if isinstance(module, (nn.Dropout, nn.Dropout2d)):
            module.train()
