"""
Learning inside-vs-outside on hollow ellipsoids
================================================

The input shows only a thin noisy shell. Deciding whether a voxel lies inside
the shell needs context from far away, which the six sweeps provide. A short
run already beats the majority-class baseline by a wide margin; the
acceptance suite trains longer.
"""

import numpy as np

from pyramidlstm import FCSpec, Network, PyramidSpec, init_uniform, network_forward
from pyramidlstm.datapipe import AugmentConfig
from pyramidlstm.metrics import dice, labels_from_probs
from pyramidlstm.toy import toy_dataset
from pyramidlstm.train import Schedule, train_loop

data = toy_dataset(seed=1, count=6)
train, held = data[:4], data[4:]
print("volume", train[0][0].shape, "foreground fraction", round(float(train[0][1].labels.mean()), 3))

net = init_uniform(Network(1, [PyramidSpec(4, 3), FCSpec(8, "tanh"), PyramidSpec(8, 3),
                               FCSpec(2, "softmax")]), seed=1)
print("parameters", net.params.size)

## Two short stages: small crops first, then whole volumes
schedule = Schedule([(30, (16, 16, 8)), (40, (32, 32, 16))])
flips = AugmentConfig(flip_x=True, flip_y=True, flip_z=True)
net, opt, rows = train_loop(net, train, schedule, seed=1, augment=flips)
for epoch, stage, rate, loss, ms in rows[::10]:
    print(f"epoch {epoch:3d}  stage {stage}  lr {rate:.5f}  loss {loss:.4f}  {ms:.0f} ms")

## Held-out volumes
for x, lab in held:
    pred = labels_from_probs(network_forward(x, net)[0])
    acc = (pred == lab.labels).mean()
    print(f"accuracy {acc:.3f}  dice(inside) {dice(pred, lab.labels, 1):.3f}  "
          f"majority {max(lab.labels.mean(), 1 - lab.labels.mean()):.3f}")
