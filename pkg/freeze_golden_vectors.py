"""
🔐 TensorTEE Simulator - Golden Vectors
Script para congelar os vetores de referência do modelo criptográfico
Gera tests/golden_vectors.json uma única vez; as execuções seguintes só conferem
"""

import json
import os
import sys
from pathlib import Path
from typing import Dict, List

# Adiciona o diretório do projeto ao path para importar os pacotes do simulador
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from dotenv import load_dotenv

import config
from utils.crypto_model import BindingMode, CounterBinding, CryptoModel, KeyMaterial

load_dotenv()

GOLDEN_PATH = Path(__file__).resolve().parent / "tests" / "golden_vectors.json"
GOLDEN_BINDINGS = (
    (CounterBinding.physical(0x1000), 1),
    (CounterBinding.physical(0x1040), 2),
    (CounterBinding.tensor(5, 0x40), 1),
)


def _binding_json(binding: CounterBinding) -> Dict[str, object]:
    mode = "pa" if binding.mode is BindingMode.PHYSICAL_ADDR else "tensor"
    return {"mode": mode, "ident": binding.ident, "offset": binding.offset}


def compute_golden_vectors(seed: int = config.DEFAULT_SEED) -> List[Dict[str, object]]:
    """Pads de referência; o primeiro é o da semente 0x5EED, PA 0x1000, VN 1"""
    key = KeyMaterial.from_seed(seed)
    return [{"seed": seed, "binding": _binding_json(binding), "vn": vn,
             "pad_hex": CryptoModel.keystream(key, binding, vn).hex()}
            for binding, vn in GOLDEN_BINDINGS]


def load_golden_vectors(path: Path = GOLDEN_PATH) -> List[Dict[str, object]]:
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def freeze(path: Path = GOLDEN_PATH, force: bool = False) -> bool:
    """Grava os vetores; não sobrescreve um arquivo existente sem force"""
    if path.exists() and not force:
        print(f"⚠️  {path} já existe; vetores congelados não são regravados.")
        return False
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(compute_golden_vectors(), handle, indent=2)
        handle.write("\n")
    print(f"✅ Vetores de referência gravados em {path}")
    return True


if __name__ == "__main__":
    print("🔐 TensorTEE - Congelamento dos vetores de referência")
    print("=" * 50)
    freeze(force="--force" in sys.argv)
