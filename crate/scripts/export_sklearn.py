"""Export the scikit-learn toy classification sets as delimited text.

Writes <name>.features (one node per line, comma separated), <name>.labels
(one integer class id per line) and <name>.manifest for wine, cancer and
digits into the directory given on the command line (default: data/).
Splits are not written; the manifests ask the loader to draw a stratified
split from a fixed seed.
"""
import os
import sys

from sklearn import datasets

SETS = {
    # name: (loader, train_count, val_count, standardize)
    "wine": (datasets.load_wine, 20, 20, True),
    "cancer": (datasets.load_breast_cancer, 20, 20, True),
    "digits": (datasets.load_digits, 100, 100, False),
}


def main(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    for name, (loader, train, val, standardize) in SETS.items():
        bunch = loader()
        x, y = bunch.data, bunch.target
        with open(os.path.join(out_dir, f"{name}.features"), "w") as f:
            for row in x:
                f.write(",".join(repr(float(v)) for v in row) + "\n")
        with open(os.path.join(out_dir, f"{name}.labels"), "w") as f:
            for v in y:
                f.write(f"{int(v)}\n")
        with open(os.path.join(out_dir, f"{name}.manifest"), "w") as f:
            f.write(f"name={name}\n")
            f.write(f"features={name}.features\n")
            f.write(f"labels={name}.labels\n")
            f.write("feature_kind=continuous\n")
            f.write("delimiter=,\n")
            f.write(f"standardize={str(standardize).lower()}\n")
            f.write(f"train_count={train}\n")
            f.write(f"val_count={val}\n")
            f.write("split_seed=0\n")
        print(name, x.shape, len(set(y)))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data")
