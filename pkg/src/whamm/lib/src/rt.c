/* Monitor runtime: bump allocation, per-site regions, sorted maps and the
 * CSV report flush.  Built with tools/build_libs.py; the compiled module is
 * linked into instrumented applications and into monitor modules. */

typedef unsigned int u32;
typedef int i32;
typedef unsigned long long u64;
typedef long long i64;
typedef unsigned char u8;

__attribute__((import_module("whamm"), import_name("whamm_report")))
void whamm_report(const u8 *ptr, u32 len);

#define PAGE 65536u

static u32 bump;
static u32 region_head;
static u32 region_tail;

enum { T_BOOL, T_U8, T_I8, T_U16, T_I16, T_U32, T_I32, T_U64, T_I64, T_F32, T_F64, T_STR };
enum { S_GLOBAL, S_SHARED, S_UNSHARED };

static void ensure(u32 end) {
    u32 have = __builtin_wasm_memory_size(0) * PAGE;
    if (end > have) {
        u32 need = (end - have + PAGE - 1) / PAGE;
        if (__builtin_wasm_memory_grow(0, need) == (u32)-1) __builtin_trap();
    }
}

static void zero(u8 *p, u32 n) {
    for (u32 i = 0; i < n; i++) p[i] = 0;
}

static void copy(u8 *dst, const u8 *src, u32 n) {
    for (u32 i = 0; i < n; i++) dst[i] = src[i];
}

__attribute__((export_name("rt_init")))
void rt_init(u32 heap_start, u32 head, u32 tail) {
    bump = (heap_start + 7u) & ~7u;
    region_head = head;
    region_tail = tail;
}

__attribute__((export_name("rt_alloc")))
u32 rt_alloc(u32 size) {
    u32 p = bump;
    u32 end = p + ((size + 7u) & ~7u);
    ensure(end);
    zero((u8 *)p, end - p);
    bump = end;
    return p;
}

/* Region header: next, fid, pc, directive; variables follow. */
__attribute__((export_name("rt_region")))
u32 rt_region(u32 size, u32 fid, u32 pc, u32 directive) {
    u32 r = rt_alloc(size);
    u32 *h = (u32 *)r;
    h[0] = 0;
    h[1] = fid;
    h[2] = pc;
    h[3] = directive;
    if (region_tail) ((u32 *)region_tail)[0] = r;
    else region_head = r;
    region_tail = r;
    return r;
}

/* Map header: count, cap, keys, vals, unsigned-key flag, pad. */
typedef struct { u32 count, cap, keys, vals, is_unsigned, pad; } Map;

static int key_less(const Map *m, i64 a, i64 b) {
    if (m->is_unsigned) return (u64)a < (u64)b;
    return a < b;
}

static u32 find(const Map *m, i64 key) {
    const i64 *keys = (const i64 *)m->keys;
    u32 lo = 0, hi = m->count;
    while (lo < hi) {
        u32 mid = (lo + hi) / 2;
        if (key_less(m, keys[mid], key)) lo = mid + 1;
        else hi = mid;
    }
    return lo;
}

__attribute__((export_name("rt_map_slot")))
u32 rt_map_slot(u32 map, i64 key) {
    Map *m = (Map *)map;
    u32 i = find(m, key);
    i64 *keys = (i64 *)m->keys;
    if (i < m->count && keys[i] == key) return m->vals + 8 * i;
    if (m->count == m->cap) {
        u32 cap = m->cap ? 2 * m->cap : 8;
        u32 nk = rt_alloc(8 * cap), nv = rt_alloc(8 * cap);
        if (m->count) {
            copy((u8 *)nk, (u8 *)m->keys, 8 * m->count);
            copy((u8 *)nv, (u8 *)m->vals, 8 * m->count);
        }
        m->keys = nk;
        m->vals = nv;
        m->cap = cap;
        keys = (i64 *)nk;
    }
    i64 *vals = (i64 *)m->vals;
    for (u32 j = m->count; j > i; j--) {
        keys[j] = keys[j - 1];
        vals[j] = vals[j - 1];
    }
    keys[i] = key;
    vals[i] = 0;
    m->count++;
    return m->vals + 8 * i;
}

__attribute__((export_name("rt_map_get")))
i64 rt_map_get(u32 map, i64 key) {
    Map *m = (Map *)map;
    u32 i = find(m, key);
    if (i < m->count && ((i64 *)m->keys)[i] == key) return ((i64 *)m->vals)[i];
    return 0;
}

__attribute__((export_name("rt_map_set")))
void rt_map_set(u32 map, i64 key, i64 value) {
    *(i64 *)rt_map_slot(map, key) = value;
}

/* ---- CSV formatting ---------------------------------------------------- */

static u8 line[4096];
static u32 pos;

static void put(u8 c) {
    if (pos < sizeof line) line[pos++] = c;
}

static void puts_(const char *s) {
    while (*s) put((u8)*s++);
}

static void put_u64(u64 v) {
    u8 buf[24];
    u32 n = 0;
    do { buf[n++] = (u8)('0' + v % 10); v /= 10; } while (v);
    while (n) put(buf[--n]);
}

static void put_i64(i64 v) {
    if (v < 0) { put('-'); put_u64((u64)0 - (u64)v); }
    else put_u64((u64)v);
}

static void put_lstr(u32 p) {
    /* length-prefixed string, written quoted with doubled quotes */
    u32 len = *(u32 *)p;
    const u8 *s = (const u8 *)(p + 4);
    put('"');
    for (u32 i = 0; i < len; i++) {
        if (s[i] == '"') put('"');
        put(s[i]);
    }
    put('"');
}

/* exact "%.6f" of a double via a small big-integer */
#define W 40
typedef struct { u32 w[W]; u32 n; } Big;

static void big_mul_small(Big *b, u32 k) {
    u64 carry = 0;
    for (u32 i = 0; i < b->n; i++) {
        u64 t = (u64)b->w[i] * k + carry;
        b->w[i] = (u32)t;
        carry = t >> 32;
    }
    if (carry) b->w[b->n++] = (u32)carry;
}

static void big_shl(Big *b, u32 s) {
    u32 words = s / 32, bits = s % 32;
    if (bits) {
        u32 carry = 0;
        for (u32 i = 0; i < b->n; i++) {
            u32 v = b->w[i];
            b->w[i] = (v << bits) | carry;
            carry = v >> (32 - bits);
        }
        if (carry) b->w[b->n++] = carry;
    }
    if (words) {
        for (u32 i = b->n; i-- > 0;) b->w[i + words] = b->w[i];
        for (u32 i = 0; i < words; i++) b->w[i] = 0;
        b->n += words;
    }
}

static int big_bit(const Big *b, u32 i) {
    u32 w = i / 32;
    return w < b->n ? (b->w[w] >> (i % 32)) & 1 : 0;
}

static int big_any_below(const Big *b, u32 i) {
    for (u32 k = 0; k < i; k++)
        if (big_bit(b, k)) return 1;
    return 0;
}

static void big_shr(Big *b, u32 s) {
    u32 words = s / 32, bits = s % 32;
    if (words >= b->n) { b->n = 0; return; }
    for (u32 i = 0; i + words < b->n; i++) b->w[i] = b->w[i + words];
    b->n -= words;
    if (bits) {
        for (u32 i = 0; i < b->n; i++) {
            u32 hi = i + 1 < b->n ? b->w[i + 1] : 0;
            b->w[i] = (b->w[i] >> bits) | (hi << (32 - bits));
        }
    }
    while (b->n && !b->w[b->n - 1]) b->n--;
}

static void big_add_one(Big *b) {
    for (u32 i = 0; i < b->n; i++)
        if (++b->w[i]) return;
    b->w[b->n++] = 1;
}

static u32 big_divmod_small(Big *b, u32 k) {
    u64 rem = 0;
    for (u32 i = b->n; i-- > 0;) {
        u64 cur = (rem << 32) | b->w[i];
        b->w[i] = (u32)(cur / k);
        rem = cur % k;
    }
    while (b->n && !b->w[b->n - 1]) b->n--;
    return (u32)rem;
}

static void put_f64(double x) {
    u64 bits = *(u64 *)&x;
    int neg = (int)(bits >> 63);
    u32 ex = (u32)(bits >> 52) & 0x7FF;
    u64 man = bits & ((1ULL << 52) - 1);
    if (ex == 0x7FF) {
        if (man) { puts_("nan"); return; }
        puts_(neg ? "-inf" : "inf");
        return;
    }
    int e;
    if (ex == 0) e = -1074;
    else { man |= 1ULL << 52; e = (int)ex - 1075; }
    Big b;
    b.n = 0;
    b.w[b.n++] = (u32)man;
    b.w[b.n++] = (u32)(man >> 32);
    while (b.n && !b.w[b.n - 1]) b.n--;
    big_mul_small(&b, 1000000u);
    if (e >= 0) big_shl(&b, (u32)e);
    else {
        u32 s = (u32)(-e);
        int half = big_bit(&b, s - 1);
        int sticky = big_any_below(&b, s - 1);
        big_shr(&b, s);
        if (half && (sticky || big_bit(&b, 0))) big_add_one(&b);
    }
    /* b = round(|x| * 1e6); emit digits */
    u8 digits[400];
    u32 n = 0;
    while (b.n) {
        u32 chunk = big_divmod_small(&b, 1000000000u);
        for (int k = 0; k < 9; k++) { digits[n++] = (u8)('0' + chunk % 10); chunk /= 10; }
    }
    while (n > 1 && digits[n - 1] == '0') n--;
    while (n < 7) digits[n++] = '0';
    if (neg) put('-');
    for (u32 i = n; i-- > 6;) put(digits[i]);
    put('.');
    for (u32 i = 6; i-- > 0;) put(digits[i]);
}

static void put_value(u32 type, u64 raw) {
    switch (type) {
    case T_BOOL: puts_(raw ? "true" : "false"); break;
    case T_U8: case T_U16: case T_U32: put_u64((u32)raw); break;
    case T_I8: case T_I16: case T_I32: put_i64((i32)raw); break;
    case T_U64: put_u64(raw); break;
    case T_I64: put_i64((i64)raw); break;
    case T_F32: { u32 b = (u32)raw; float f = *(float *)&b; put_f64((double)f); break; }
    case T_F64: { double d = *(double *)&raw; put_f64(d); break; }
    case T_STR: put_lstr((u32)raw); break;
    }
}

static const char *TYPE_NAMES[] = {"bool", "u8", "i8", "u16", "i16", "u32", "i32",
                                   "u64", "i64", "f32", "f64", "str"};
static const char *STORAGE_NAMES[] = {"global", "shared", "unshared"};

static u64 load_scalar(u32 addr, u32 type) {
    if (type == T_U64 || type == T_I64 || type == T_F64) return *(u64 *)addr;
    return *(u32 *)addr;
}

/* Descriptor: name, storage, directive, offset, type, is_map, key_type. */
typedef struct { u32 name, storage, directive, offset, type, is_map, key_type; } Desc;

static void emit_row(const Desc *d, i64 fid, i64 pc, int has_key, u64 key, u64 value) {
    pos = 0;
    u32 len = *(u32 *)d->name;
    const u8 *s = (const u8 *)(d->name + 4);
    for (u32 i = 0; i < len; i++) put(s[i]);
    put(',');
    puts_(STORAGE_NAMES[d->storage]);
    put(',');
    put_i64(fid);
    put(',');
    put_i64(pc);
    put(',');
    if (has_key) put_value(d->key_type, key);
    put(',');
    puts_(TYPE_NAMES[d->type]);
    put(',');
    put_value(d->type, value);
    put('\n');
    whamm_report(line, pos);
}

static void emit_var(const Desc *d, u32 addr, i64 fid, i64 pc) {
    if (!d->is_map) {
        emit_row(d, fid, pc, 0, 0, load_scalar(addr, d->type));
        return;
    }
    const Map *m = (const Map *)addr;
    for (u32 i = 0; i < m->count; i++)
        emit_row(d, fid, pc, 1, ((u64 *)m->keys)[i], ((u64 *)m->vals)[i]);
}

__attribute__((export_name("rt_flush")))
void rt_flush(u32 table, u32 n) {
    const Desc *descs = (const Desc *)table;
    for (u32 i = 0; i < n; i++) {
        const Desc *d = &descs[i];
        if (d->storage != S_UNSHARED) {
            emit_var(d, d->offset, -1, -1);
            continue;
        }
        for (u32 r = region_head; r; r = ((u32 *)r)[0]) {
            const u32 *h = (const u32 *)r;
            if (h[3] == d->directive) emit_var(d, r + d->offset, h[1], h[2]);
        }
    }
}
