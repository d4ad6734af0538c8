"""Small convolutional network with manual backpropagation."""

from .layers import (BatchNorm2D, Context, Conv2D, Dropout, Flatten, Layer, Linear, MaxPool2D,
                     ReLU)
from .network import (NetConfig, Network, TrainResult, build_micro_net, cross_entropy,
                      saliency_map, softmax, train_net)

__all__ = [
    "BatchNorm2D", "Context", "Conv2D", "Dropout", "Flatten", "Layer", "Linear", "MaxPool2D",
    "NetConfig", "Network", "ReLU", "TrainResult", "build_micro_net", "cross_entropy",
    "saliency_map", "softmax", "train_net",
]
