import hashlib


def derive_seed(master, component, index=0):
    """Child seed as a 64-bit hash of ``(master, component, index)``.

    Distinct components get unrelated streams even for adjacent masters.
    """
    payload = f"{int(master)}|{component}|{int(index)}".encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")
