/* Set-associative LRU cache model used by the cache_sim monitor.
 * access() returns 1 on a hit and 0 on a miss.  The geometry is passed on
 * every call; changing it resets the model. */

typedef unsigned int u32;

#define MAX_LINES 16384u

static u32 tags[MAX_LINES];
static u32 stamps[MAX_LINES]; /* 0 = invalid */
static u32 clock;
static u32 cur_sets, cur_ways, cur_line;

static void reset(u32 sets, u32 ways, u32 line) {
    for (u32 i = 0; i < MAX_LINES; i++) stamps[i] = 0;
    clock = 0;
    cur_sets = sets;
    cur_ways = ways;
    cur_line = line;
}

__attribute__((export_name("access")))
u32 access(u32 addr, u32 sets, u32 ways, u32 line) {
    if (sets == 0 || ways == 0 || line == 0 || sets * ways > MAX_LINES) __builtin_trap();
    if (sets != cur_sets || ways != cur_ways || line != cur_line) reset(sets, ways, line);
    u32 block = addr / line;
    u32 set = block % sets;
    u32 tag = block / sets;
    u32 base = set * ways;
    u32 victim = base;
    clock++;
    for (u32 w = 0; w < ways; w++) {
        u32 i = base + w;
        if (stamps[i] && tags[i] == tag) {
            stamps[i] = clock;
            return 1;
        }
        if (stamps[i] < stamps[victim]) victim = i;
    }
    tags[victim] = tag;
    stamps[victim] = clock;
    return 0;
}
