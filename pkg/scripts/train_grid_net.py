"""Generate a grid patch dataset and train the grid local-solver MLP.

Writes the dataset (JSONL), trained weights, and a loss-history CSV.
"""

import argparse
import os

from eikonal.data import gen_grid_dataset, save_dataset, to_training_arrays
from eikonal.net import TrainConfig, grid_spec, save_weights, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=20000)
    ap.add_argument("--out-dir", default="out/grid_net")
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--lr-decay", type=float, default=1.0)
    ap.add_argument("--patience", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    os.makedirs(args.out_dir, exist_ok=True)
    examples = gen_grid_dataset(args.count, seed=args.seed)
    data_path = os.path.join(args.out_dir, "grid_data.jsonl")
    save_dataset(examples, data_path, seed=args.seed, meta={"kind": "grid"})
    print(f"wrote {data_path} ({len(examples)} examples)")

    config = TrainConfig(
        learning_rate=args.lr, batch_size=args.batch, max_epochs=args.epochs,
        patience=args.patience, lr_decay=args.lr_decay)
    weights, history = train(to_training_arrays(examples), grid_spec(),
                             config, seed=args.seed)
    weights_path = os.path.join(args.out_dir, "grid.deik")
    save_weights(weights, weights_path)

    history_path = os.path.join(args.out_dir, "history.csv")
    with open(history_path, "w") as f:
        f.write("epoch,train_mse,val_mse\n")
        for epoch, tr, va in history:
            f.write(f"{epoch},{tr!r},{va!r}\n")
    best = min(h[2] for h in history)
    print(f"wrote {weights_path} (epochs={history[-1][0]}, "
          f"best_val_mse={best:.3e})")


if __name__ == "__main__":
    main()
