"""Exporter command line.

    xmodal-export export --modality image --model toy \
        --inputs listing.csv --views flip --out store.xmf

Listings are CSV with a header: image/audio mode needs path,class_id
(class_name optional); text mode needs class_name,class_id plus an
optional --templates file (one template per line, '{cls}' placeholder).
Exit codes: 0 success, 1 input/model error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ExportError, UnreadableInput
from .export import ExportJob, export_features, read_listing
from .models import load_encoder


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # flag mistakes are user errors: exit 1
        raise UnreadableInput(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="xmodal-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sp = sub.add_parser("export", help="encode inputs into a feature store")
    sp.add_argument("--modality", required=True,
                    choices=["image", "text", "audio"])
    sp.add_argument("--model", default="toy",
                    help="'toy' or 'clip:<hf model id>'")
    sp.add_argument("--inputs", required=True, help="input listing CSV")
    sp.add_argument("--views", default="center",
                    help="center | flip | crops:k (image modality)")
    sp.add_argument("--templates", help="template file for text mode")
    sp.add_argument("--normalize", action="store_true",
                    help="L2-normalize embeddings before writing")
    sp.add_argument("--seed", type=int, default=0,
                    help="random-crop generator seed")
    sp.add_argument("--dataset", help="dataset name for the manifest")
    sp.add_argument("--out", required=True, help="output store path")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        encoder = load_encoder(args.model)
        rows = read_listing(args.inputs, text_mode=args.modality == "text")
        templates = None
        if args.templates:
            lines = Path(args.templates).read_text().splitlines()
            templates = [ln for ln in lines if ln]
        job = ExportJob(
            modality=args.modality,
            model=encoder,
            rows=rows,
            out_path=Path(args.out),
            views=args.views,
            templates=templates,
            normalize=args.normalize,
            seed=args.seed,
            dataset=args.dataset or Path(args.inputs).stem,
        )
        count = export_features(job)
    except (ExportError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {count} records ({encoder.dimension}-d) to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
