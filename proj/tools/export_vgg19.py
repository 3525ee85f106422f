#!/usr/bin/env python3
"""Write torchvision's ImageNet VGG19 conv weights in the psfr checkpoint format.

The result is what `[extractor] kind = vgg19` expects in `weights`:

    python3 tools/export_vgg19.py weights/vgg19.ckpt
"""
import argparse
import os
import struct

import torch
import torchvision

MAGIC = b"PSFRCKPT"
VERSION = 1
FLOAT32 = 1


def put_str(out, s):
    b = s.encode()
    out.write(struct.pack("<Q", len(b)))
    out.write(b)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", help="destination .ckpt path")
    args = ap.parse_args()

    model = torchvision.models.vgg19(weights=torchvision.models.VGG19_Weights.IMAGENET1K_V1)
    tensors = [(k, v) for k, v in model.state_dict().items() if k.startswith("features.")]

    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    tmp = args.out + ".tmp"
    with open(tmp, "wb") as out:
        out.write(MAGIC)
        out.write(struct.pack("<I", VERSION))
        put_str(out, "weights")
        put_str(out, "")
        out.write(struct.pack("<q", 0))
        out.write(struct.pack("<Q", len(tensors)))
        for name, t in tensors:
            t = t.detach().to(torch.float32).contiguous()
            put_str(out, name)
            out.write(struct.pack("<B", FLOAT32))
            out.write(struct.pack("<I", t.dim()))
            out.write(struct.pack("<%dq" % t.dim(), *t.shape))
            out.write(t.numpy().tobytes())
    os.replace(tmp, args.out)
    print("wrote %d tensors to %s" % (len(tensors), args.out))


if __name__ == "__main__":
    main()
