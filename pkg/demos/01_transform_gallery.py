"""Render every transform at three magnitudes into one contact sheet.

Writes transform_gallery.png: rows are the ten operations, columns are grid
levels 0 / 4 / 9 (R=10), with the untouched source image on the far left.
"""

import numpy as np
from PIL import Image as PILImage

from aadg.bench import default_domain_specs, generate_domain
from aadg.rng import SplitMix64
from aadg.transforms import OP_ORDER, Operation, apply_op

SIZE = 64
LEVELS = (0, 4, 9)

source = generate_domain(default_domain_specs()[0], 1, np.random.default_rng(7), SIZE)[0].image

pad = 4
rows = len(OP_ORDER)
cols = 1 + len(LEVELS)
sheet = np.full((rows * (SIZE + pad) + pad, cols * (SIZE + pad) + pad, 3), 30, dtype=np.uint8)

for r, kind in enumerate(OP_ORDER):
    y = pad + r * (SIZE + pad)
    sheet[y : y + SIZE, pad : pad + SIZE] = source.pixels
    for c, level in enumerate(LEVELS):
        out = apply_op(source, Operation(kind, level, 10), SplitMix64(1000 + r * 10 + c))
        x = pad + (c + 1) * (SIZE + pad)
        sheet[y : y + SIZE, x : x + SIZE] = out.pixels
    print(f"{kind.value:12s} magnitudes: "
          + ", ".join(f"{Operation(kind, l, 10).magnitude:g}" for l in LEVELS))

PILImage.fromarray(sheet).save("transform_gallery.png")
print("\nwrote transform_gallery.png "
      f"({rows} ops x [source, levels {LEVELS}] at R=10)")
