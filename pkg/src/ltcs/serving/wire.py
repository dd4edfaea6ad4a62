"""Binary encoding of the messages exchanged between leaf shards and the master.

A frame is a ``u32`` body length followed by the body. All integers and
floats are little-endian. Body layout, in order:

=============  =========  ===================================================
field          type       meaning
=============  =========  ===================================================
kind           u8         1 score_request, 2 score_response, 3 rerank_result
version        u16        schema version, currently 1
float_width    u8         4 or 8 bytes per float below
query_id       u64
count          u32        number of full records
tail_count     u32        number of logit-only records
dim            u16        floats per record embedding (0 allowed)
aux_count      u32        number of auxiliary floats
aux            float[]    ``aux_count`` floats (query features in a request)
records        ...        ``count`` x (item_id u64, logit float, dim floats)
tail           ...        ``tail_count`` x (item_id u64, logit float)
=============  =========  ===================================================

A score_response carries the shard's local top candidates with their
embeddings as records and every other candidate's logit in the tail. A
rerank_result lists the final ranking: the re-ranked head as records (logit
is the re-rank logit, dim 0) and the rest as tail records with initial logits.
"""
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import ProtocolError

VERSION = 1
SCORE_REQUEST, SCORE_RESPONSE, RERANK_RESULT = 1, 2, 3
KINDS = {SCORE_REQUEST: "score_request", SCORE_RESPONSE: "score_response",
         RERANK_RESULT: "rerank_result"}
_HEADER = struct.Struct("<BHBQIIHI")
_LEN = struct.Struct("<I")
_FLOAT = {4: np.dtype("<f4"), 8: np.dtype("<f8")}
MAX_FRAME = 1 << 30


def _floats(values, width, shape):
    return np.ascontiguousarray(np.asarray(values, dtype=_FLOAT[width]).reshape(shape))


@dataclass(eq=False)
class WireMessage:
    kind: int
    query_id: int
    float_width: int = 4
    item_ids: np.ndarray = None
    logits: np.ndarray = None
    embeddings: np.ndarray = None
    tail_ids: np.ndarray = None
    tail_logits: np.ndarray = None
    aux: np.ndarray = None
    version: int = VERSION
    dim: int = field(init=False, default=0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ProtocolError(f"unknown message kind {self.kind}")
        if self.float_width not in _FLOAT:
            raise ProtocolError(f"float width must be 4 or 8, got {self.float_width}")
        if not 0 <= int(self.query_id) < 1 << 64:
            raise ProtocolError(f"query_id {self.query_id} does not fit in u64")
        w = self.float_width
        self.item_ids = np.asarray([] if self.item_ids is None else self.item_ids,
                                   dtype="<u8").reshape(-1)
        n = len(self.item_ids)
        self.logits = _floats([] if self.logits is None else self.logits, w, (-1,))
        if self.embeddings is None:
            self.embeddings = np.zeros((n, 0))
        emb = np.asarray(self.embeddings)
        if emb.ndim != 2 or emb.shape[0] != n:
            raise ProtocolError(f"embeddings of shape {emb.shape} for {n} records")
        self.embeddings = _floats(emb, w, emb.shape)
        self.dim = emb.shape[1]
        if len(self.logits) != n:
            raise ProtocolError(f"{len(self.logits)} logits for {n} records")
        self.tail_ids = np.asarray([] if self.tail_ids is None else self.tail_ids,
                                   dtype="<u8").reshape(-1)
        self.tail_logits = _floats([] if self.tail_logits is None else self.tail_logits, w,
                                   (-1,))
        if len(self.tail_logits) != len(self.tail_ids):
            raise ProtocolError(f"{len(self.tail_logits)} tail logits for "
                                f"{len(self.tail_ids)} tail records")
        self.aux = _floats([] if self.aux is None else self.aux, w, (-1,))
        if self.dim >= 1 << 16:
            raise ProtocolError(f"embedding width {self.dim} does not fit in u16")

    @property
    def kind_name(self):
        return KINDS[self.kind]

    def all_ids(self):
        return np.concatenate([self.item_ids, self.tail_ids])

    def __eq__(self, other):
        if not isinstance(other, WireMessage):
            return NotImplemented
        scalars = ("kind", "query_id", "float_width", "version", "dim")
        if any(getattr(self, s) != getattr(other, s) for s in scalars):
            return False
        arrays = ("item_ids", "logits", "embeddings", "tail_ids", "tail_logits", "aux")
        # compare bytes so that -0.0 vs 0.0 and NaN payloads count as differences
        return all(getattr(self, a).shape == getattr(other, a).shape
                   and getattr(self, a).tobytes() == getattr(other, a).tobytes()
                   for a in arrays)


def encode_body(msg):
    w = msg.float_width
    header = _HEADER.pack(msg.kind, msg.version, w, int(msg.query_id), len(msg.item_ids),
                          len(msg.tail_ids), msg.dim, len(msg.aux))
    rec = np.empty(len(msg.item_ids), dtype=[("id", "<u8"), ("logit", _FLOAT[w]),
                                             ("emb", _FLOAT[w], (msg.dim,))])
    rec["id"] = msg.item_ids
    rec["logit"] = msg.logits
    rec["emb"] = msg.embeddings
    tail = np.empty(len(msg.tail_ids), dtype=[("id", "<u8"), ("logit", _FLOAT[w])])
    tail["id"] = msg.tail_ids
    tail["logit"] = msg.tail_logits
    return b"".join([header, msg.aux.tobytes(), rec.tobytes(), tail.tobytes()])


def encode(msg):
    body = encode_body(msg)
    return _LEN.pack(len(body)) + body


def decode_body(body):
    body = bytes(body)
    if len(body) < _HEADER.size:
        raise ProtocolError(f"message body of {len(body)} bytes is shorter than the header")
    kind, version, w, qid, count, tail_count, dim, aux_count = _HEADER.unpack_from(body)
    if version != VERSION:
        raise ProtocolError(f"wire schema version {version} is not supported "
                            f"(expected {VERSION})")
    if kind not in KINDS:
        raise ProtocolError(f"unknown message kind {kind}")
    if w not in _FLOAT:
        raise ProtocolError(f"float width must be 4 or 8, got {w}")
    f = _FLOAT[w]
    rec_t = np.dtype([("id", "<u8"), ("logit", f), ("emb", f, (dim,))])
    tail_t = np.dtype([("id", "<u8"), ("logit", f)])
    need = (_HEADER.size + aux_count * w + count * rec_t.itemsize
            + tail_count * tail_t.itemsize)
    if len(body) != need:
        raise ProtocolError(f"message body has {len(body)} bytes, header implies {need}")
    off = _HEADER.size
    aux = np.frombuffer(body, f, aux_count, off)
    off += aux_count * w
    rec = np.frombuffer(body, rec_t, count, off)
    off += count * rec_t.itemsize
    tail = np.frombuffer(body, tail_t, tail_count, off)
    return WireMessage(kind, qid, w, item_ids=rec["id"], logits=rec["logit"],
                       embeddings=rec["emb"].reshape(count, dim), tail_ids=tail["id"],
                       tail_logits=tail["logit"], aux=aux)


def decode(frame):
    """Decode one complete frame (length prefix included)."""
    frame = bytes(frame)
    if len(frame) < _LEN.size:
        raise ProtocolError("frame is shorter than its length prefix")
    (n,) = _LEN.unpack_from(frame)
    if len(frame) != _LEN.size + n:
        raise ProtocolError(f"frame length prefix says {n} bytes, got "
                            f"{len(frame) - _LEN.size}")
    return decode_body(frame[_LEN.size:])


def send_frame(sock, msg):
    sock.sendall(encode(msg))


def _recv_exact(sock, n):
    chunks = []
    while n:
        chunk = sock.recv(min(n, 1 << 20))
        if not chunk:
            raise ProtocolError("connection closed mid-frame")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def recv_frame(sock):
    (n,) = _LEN.unpack(_recv_exact(sock, _LEN.size))
    if n > MAX_FRAME:
        raise ProtocolError(f"frame of {n} bytes exceeds the {MAX_FRAME}-byte limit")
    return decode_body(_recv_exact(sock, n))
