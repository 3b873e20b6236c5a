#!/usr/bin/env python3
"""Download the heterophily benchmark graphs and convert them to the manifest
layout the toolkit reads.

Produces, per dataset:
    datasets/<name>/edges.txt       one "u v" pair per line
    datasets/<name>/features.csv    dense numeric rows, one per node
    datasets/<name>/labels.txt      one class index per line
    datasets/<name>/splits.json     the 10 standard train/val/test splits
    datasets/<name>/manifest.json

Sources are the preprocessed files of the Geom-GCN repository, which is also
where the reference sheaf-network code takes its data from. Requires network
access and numpy.
"""

import argparse
import io
import json
import pathlib
import urllib.request

import numpy as np

RAW_BASE = "https://raw.githubusercontent.com/graphdml-uiuc-jlu/geom-gcn/master"

DATASETS = ["texas", "wisconsin", "cornell", "squirrel", "chameleon", "film"]
SPARSE_FEATURES = {"film"}  # feature column lists active indices, not a dense row


def fetch(url: str) -> bytes:
    print(f"  GET {url}")
    with urllib.request.urlopen(url, timeout=120) as response:
        return response.read()


def parse_features_labels(text: str, sparse: bool):
    lines = [line for line in text.strip().split("\n")[1:] if line]
    labels = []
    if sparse:
        index_lists = []
        max_index = -1
        for line in lines:
            _, feat, label = line.split("\t")
            indices = [int(v) for v in feat.split(",")]
            index_lists.append(indices)
            max_index = max(max_index, max(indices))
            labels.append(int(label))
        features = np.zeros((len(lines), max_index + 1), dtype=np.float64)
        for row, indices in enumerate(index_lists):
            features[row, indices] = 1.0
    else:
        rows = []
        for line in lines:
            _, feat, label = line.split("\t")
            rows.append([float(v) for v in feat.split(",")])
            labels.append(int(label))
        features = np.asarray(rows, dtype=np.float64)
    return features, labels


def parse_edges(text: str):
    lines = [line for line in text.strip().split("\n")[1:] if line]
    return [tuple(int(v) for v in line.split("\t")) for line in lines]


def fetch_splits(name: str, n: int):
    folds = []
    for i in range(10):
        url = f"{RAW_BASE}/splits/{name}_split_0.6_0.2_{i}.npz"
        with np.load(io.BytesIO(fetch(url))) as npz:
            fold = {
                key: np.nonzero(npz[f"{key}_mask"])[0].tolist()
                for key in ("train", "val", "test")
            }
        for key, idx in fold.items():
            if any(v < 0 or v >= n for v in idx):
                raise ValueError(f"{name} split {i}: {key} index out of range")
        folds.append(fold)
    return folds


def write_dataset(name: str, out_root: pathlib.Path):
    print(f"{name}:")
    out_dir = out_root / name
    out_dir.mkdir(parents=True, exist_ok=True)

    feat_text = fetch(f"{RAW_BASE}/new_data/{name}/out1_node_feature_label.txt").decode()
    edge_text = fetch(f"{RAW_BASE}/new_data/{name}/out1_graph_edges.txt").decode()
    features, labels = parse_features_labels(feat_text, name in SPARSE_FEATURES)
    edges = parse_edges(edge_text)
    folds = fetch_splits(name, len(labels))

    with open(out_dir / "edges.txt", "w") as f:
        for u, v in edges:
            f.write(f"{u} {v}\n")
    np.savetxt(out_dir / "features.csv", features, delimiter=",", fmt="%.10g")
    with open(out_dir / "labels.txt", "w") as f:
        f.write("\n".join(str(y) for y in labels) + "\n")
    with open(out_dir / "splits.json", "w") as f:
        json.dump(folds, f)
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(
            {
                "name": name,
                "edges": "edges.txt",
                "features": "features.csv",
                "labels": "labels.txt",
                "splits": "splits.json",
            },
            f,
            indent=2,
        )
    print(f"  {len(labels)} nodes, {features.shape[1]} features, "
          f"{len(edges)} raw edge lines -> {out_dir}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("names", nargs="*", default=DATASETS,
                        help=f"datasets to fetch (default: {' '.join(DATASETS)})")
    parser.add_argument("--out", default=str(pathlib.Path(__file__).parent),
                        help="output root (default: this directory)")
    args = parser.parse_args()
    for name in args.names or DATASETS:
        if name not in DATASETS:
            raise SystemExit(f"unknown dataset {name}; known: {', '.join(DATASETS)}")
        write_dataset(name, pathlib.Path(args.out))


if __name__ == "__main__":
    main()
