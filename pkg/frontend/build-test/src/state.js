/** Query-builder state and its lossless URL encoding.
 *
 * The state serializes to a URL query string so any analysis view is a
 * shareable link, and it maps one-to-one onto the /v1/data and /v1/derived
 * request parameters. decode(encode(s)) === s for every valid state.
 */
export const AGG_BINS = ["hour", "day", "month"];
export const AGG_STATS = ["mean", "min", "max", "count", "sum"];
export const PRODUCTS = ["ndvi", "evi2", "fapar", "lai", "vpd"];
export function defaultState() {
    return {
        series: [],
        fromUtc: "2024-03-01T00:00:00Z",
        toUtc: "2024-03-08T00:00:00Z",
        todWindow: null,
        parMin: { enabled: false, value: 900 },
        excludeFlagged: true,
        agg: { bin: "day", stat: "mean" },
    };
}
const TS_RE = /^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z$/;
/** Human-readable reason the state cannot be sent, or null when valid.
 *  Mirrors the service preconditions so bad requests fail before the wire. */
export function validateState(state) {
    if (state.series.length === 0)
        return "Select at least one series.";
    if (!TS_RE.test(state.fromUtc) || !TS_RE.test(state.toUtc)) {
        return "Timestamps must be ISO-8601 UTC (YYYY-MM-DDThh:mm:ssZ).";
    }
    if (state.fromUtc > state.toUtc)
        return "The time span is inverted (from is after to).";
    if (state.todWindow) {
        const { start, end } = state.todWindow;
        if (!inMinuteRange(start) || !inMinuteRange(end)) {
            return "Time-of-day minutes must be integers in [0, 1440).";
        }
    }
    if (state.parMin.value < 0 || !Number.isFinite(state.parMin.value)) {
        return "The clear-sky PAR threshold must be a non-negative number.";
    }
    return null;
}
function inMinuteRange(m) {
    return Number.isInteger(m) && m >= 0 && m < 1440;
}
export function encodeState(state) {
    const params = new URLSearchParams();
    for (const sel of state.series) {
        params.append("s", sel.kind === "channel"
            ? `c:${sel.channelId}`
            : `d:${sel.product}:${sel.target}`);
    }
    params.set("from", state.fromUtc);
    params.set("to", state.toUtc);
    if (state.todWindow)
        params.set("tod", `${state.todWindow.start}-${state.todWindow.end}`);
    params.set("par", `${state.parMin.enabled ? "on" : "off"}:${state.parMin.value}`);
    params.set("excl", state.excludeFlagged ? "1" : "0");
    if (state.agg)
        params.set("agg", `${state.agg.bin}:${state.agg.stat}`);
    return params.toString();
}
export function decodeState(encoded) {
    const params = new URLSearchParams(encoded);
    const series = [];
    for (const token of params.getAll("s")) {
        if (token.startsWith("c:")) {
            series.push({ kind: "channel", channelId: token.slice(2) });
        }
        else if (token.startsWith("d:")) {
            const rest = token.slice(2);
            const sep = rest.indexOf(":");
            const product = rest.slice(0, sep);
            if (!PRODUCTS.includes(product))
                throw new Error(`bad derived token: ${token}`);
            series.push({ kind: "derived", product, target: rest.slice(sep + 1) });
        }
        else {
            throw new Error(`bad series token: ${token}`);
        }
    }
    const par = params.get("par") ?? "off:900";
    const colon = par.indexOf(":");
    const aggToken = params.get("agg");
    let agg = null;
    if (aggToken) {
        const [bin, stat] = aggToken.split(":");
        if (!AGG_BINS.includes(bin) || !AGG_STATS.includes(stat)) {
            throw new Error(`bad agg token: ${aggToken}`);
        }
        agg = { bin: bin, stat: stat };
    }
    const tod = params.get("tod");
    let todWindow = null;
    if (tod) {
        const [start, end] = tod.split("-").map(Number);
        todWindow = { start, end };
    }
    return {
        series,
        fromUtc: params.get("from") ?? "",
        toUtc: params.get("to") ?? "",
        todWindow,
        parMin: { enabled: par.slice(0, colon) === "on", value: Number(par.slice(colon + 1)) },
        excludeFlagged: params.get("excl") !== "0",
        agg,
    };
}
function sharedParams(state) {
    const out = [
        ["from", state.fromUtc],
        ["to", state.toUtc],
    ];
    if (state.todWindow)
        out.push(["tod", `${state.todWindow.start}-${state.todWindow.end}`]);
    if (state.parMin.enabled)
        out.push(["par_min", String(state.parMin.value)]);
    if (!state.excludeFlagged)
        out.push(["exclude_flags", "none"]);
    if (state.agg)
        out.push(["agg", `${state.agg.bin}:${state.agg.stat}`]);
    return out;
}
/** The exact service requests this state stands for: one /v1/data call for
 *  physical channels plus one /v1/derived call per product in use. */
export function toRequests(state) {
    const requests = [];
    const channels = state.series.filter(s => s.kind === "channel");
    if (channels.length > 0) {
        const params = channels.map(s => [
            "channel", s.channelId
        ]);
        requests.push({ path: "/v1/data", params: [...params, ...sharedParams(state)] });
    }
    const byProduct = new Map();
    for (const sel of state.series) {
        if (sel.kind === "derived") {
            const targets = byProduct.get(sel.product) ?? [];
            targets.push(sel.target);
            byProduct.set(sel.product, targets);
        }
    }
    for (const [product, targets] of byProduct) {
        const params = targets.map(t => ["target", t]);
        requests.push({
            path: `/v1/derived/${product}`,
            params: [...params, ...sharedParams(state)],
        });
    }
    return requests;
}
/** Key under which a selection's points arrive in a response body. */
export function responseKey(sel) {
    return sel.kind === "channel"
        ? sel.channelId
        : `derived:${sel.product}:${sel.target}`;
}
