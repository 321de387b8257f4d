#!/usr/bin/env python3
"""Regenerate the ONNX test assets under tests/assets/.

Each graph maps a (1, 1, D, H, W) float32 patch to two-class scores where
class 1 wins exactly when lo <= value <= hi (for integer-valued inputs):
the margin min(x - lo, hi - x) is scaled hard enough that the softmax
saturates, and a small positive bias keeps the bounds inclusive.
"""

import json
from pathlib import Path

import numpy as np

from voxkit.onnxlite.build import model_bytes, node, tensor, value_info

LO, HI = 0.0, 100.0
SCALE, BIAS = 50.0, 1.0


def threshold_graph(with_softmax: bool) -> bytes:
    nodes = [
        node("Sub", ["input", "lo"], ["above_lo"]),
        node("Sub", ["hi", "input"], ["below_hi"]),
        node("Min", ["above_lo", "below_hi"], ["margin"]),
        node("Mul", ["margin", "scale"], ["scaled"]),
        node("Neg", ["scaled"], ["logit0"]),
        node("Add", ["scaled", "bias"], ["logit1"]),
        node("Concat", ["logit0", "logit1"], ["logits"], axis=1),
    ]
    output_name = "logits"
    if with_softmax:
        nodes.append(node("Softmax", ["logits"], ["probs"], axis=1))
        output_name = "probs"
    initializers = [
        tensor("lo", np.array(LO, dtype=np.float32)),
        tensor("hi", np.array(HI, dtype=np.float32)),
        tensor("scale", np.array(SCALE, dtype=np.float32)),
        tensor("bias", np.array(BIAS, dtype=np.float32)),
    ]
    return model_bytes(
        nodes=nodes,
        inputs=[value_info("input", 1, (1, 1, None, None, None))],
        outputs=[value_info(output_name, 1, (1, 2, None, None, None))],
        initializers=initializers,
        graph_name="window_threshold",
    )


def main():
    assets = Path(__file__).resolve().parent.parent / "tests" / "assets"
    assets.mkdir(parents=True, exist_ok=True)

    (assets / "threshold_window.onnx").write_bytes(threshold_graph(with_softmax=True))
    (assets / "threshold_window.io.json").write_text(
        json.dumps(
            {
                "input_name": "input",
                "output_name": "probs",
                "apply_softmax": False,
                "class_count": 2,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )

    (assets / "threshold_window_logits.onnx").write_bytes(threshold_graph(with_softmax=False))
    (assets / "threshold_window_logits.io.json").write_text(
        json.dumps(
            {
                "input_name": "input",
                "output_name": "logits",
                "apply_softmax": True,
                "class_count": 2,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    print(f"wrote assets to {assets}")


if __name__ == "__main__":
    main()
