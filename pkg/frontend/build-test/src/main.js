/** Single-page client: series explorer, spatial animation, upload form.
 *
 * State lives in the URL hash so every analysis is a shareable link. All
 * numbers on screen come straight from service responses.
 */
import { ApiError, fetchChannels, fetchDeployments, fetchFrames, fetchSeries, uploadFile } from "./api.js";
import { AnimationModel, colorRamp, reliabilityColor, scrubberModel } from "./frames.js";
import { chartScale, seriesColor, toSegments, totalPoints } from "./series.js";
import { AGG_BINS, AGG_STATS, PRODUCTS, decodeState, defaultState, encodeState, responseKey, toRequests, validateState } from "./state.js";
import { errorTableRows, uploadBanner } from "./upload.js";
function el(tag, attrs = {}, ...children) {
    const node = document.createElement(tag);
    for (const [k, v] of Object.entries(attrs)) {
        if (k === "class")
            node.className = v;
        else
            node.setAttribute(k, v);
    }
    node.append(...children);
    return node;
}
function svgEl(tag, attrs) {
    const node = document.createElementNS("http://www.w3.org/2000/svg", tag);
    for (const [k, v] of Object.entries(attrs))
        node.setAttribute(k, v);
    return node;
}
// ---------------------------------------------------------------- series view
class SeriesView {
    constructor() {
        this.state = defaultState();
        this.controls = el("div", { class: "controls" });
        this.status = el("div", { class: "status" });
        this.chartBox = el("div", { class: "chart-box" });
        this.channels = [];
        this.deployments = [];
        this.root = el("section", {}, this.controls, this.status, this.chartBox);
    }
    async init() {
        const listing = await fetchDeployments();
        this.deployments = listing.deployments.map(d => d.deployment_id);
        const all = await Promise.all(this.deployments.map(fetchChannels));
        this.channels = all.flatMap(r => r.channels);
        if (location.hash.length > 1) {
            try {
                this.state = decodeState(location.hash.slice(1));
            }
            catch {
                this.state = defaultState();
            }
        }
        this.renderControls();
        if (this.state.series.length > 0)
            await this.run();
    }
    syncUrl() {
        history.replaceState(null, "", "#" + encodeState(this.state));
    }
    renderControls() {
        const s = this.state;
        this.controls.replaceChildren();
        const channelPick = el("select", { multiple: "1", size: "8" });
        for (const ch of this.channels) {
            const opt = el("option", { value: `c:${ch.channel_id}` }, `${ch.channel_id} (${ch.variable})`);
            opt.selected = s.series.some(x => x.kind === "channel" && x.channelId === ch.channel_id);
            channelPick.append(opt);
        }
        for (const product of PRODUCTS) {
            for (const dep of this.deployments) {
                const target = product === "ndvi" || product === "evi2"
                    ? dep : null;
                if (target) {
                    const opt = el("option", { value: `d:${product}:${target}` }, `derived ${product} @ ${target}`);
                    opt.selected = s.series.some(x => x.kind === "derived" && x.product === product && x.target === target);
                    channelPick.append(opt);
                }
            }
            for (const ch of this.channels) {
                if (["fapar", "lai"].includes(product) && ch.variable === "par_umol_m2_s"
                    && ch.orientation === "incoming" && ch.node_id.includes("under")) {
                    const opt = el("option", { value: `d:${product}:${ch.node_id}` }, `derived ${product} @ ${ch.node_id}`);
                    opt.selected = s.series.some(x => x.kind === "derived" && x.product === product && x.target === ch.node_id);
                    channelPick.append(opt);
                }
            }
        }
        channelPick.addEventListener("change", () => {
            const picked = [];
            for (const opt of channelPick.selectedOptions) {
                const v = opt.value;
                if (v.startsWith("c:")) {
                    picked.push({ kind: "channel", channelId: v.slice(2) });
                }
                else {
                    const [, product, ...rest] = v.split(":");
                    picked.push({ kind: "derived",
                        product: product,
                        target: rest.join(":") });
                }
            }
            s.series = picked;
            this.syncUrl();
        });
        const fromBox = el("input", { value: s.fromUtc, size: "22" });
        const toBox = el("input", { value: s.toUtc, size: "22" });
        fromBox.addEventListener("change", () => { s.fromUtc = fromBox.value; this.syncUrl(); });
        toBox.addEventListener("change", () => { s.toUtc = toBox.value; this.syncUrl(); });
        const todOn = el("input", { type: "checkbox" });
        todOn.checked = s.todWindow !== null;
        const todStart = el("input", { value: String(s.todWindow?.start ?? 600), size: "5" });
        const todEnd = el("input", { value: String(s.todWindow?.end ?? 840), size: "5" });
        const todSync = () => {
            s.todWindow = todOn.checked
                ? { start: Number(todStart.value), end: Number(todEnd.value) } : null;
            this.syncUrl();
        };
        for (const box of [todOn, todStart, todEnd])
            box.addEventListener("change", todSync);
        const parOn = el("input", { type: "checkbox" });
        parOn.checked = s.parMin.enabled;
        const parValue = el("input", { value: String(s.parMin.value), size: "6" });
        const parSync = () => {
            s.parMin = { enabled: parOn.checked, value: Number(parValue.value) };
            this.syncUrl();
        };
        parOn.addEventListener("change", parSync);
        parValue.addEventListener("change", parSync);
        const exclBox = el("input", { type: "checkbox" });
        exclBox.checked = s.excludeFlagged;
        exclBox.addEventListener("change", () => {
            s.excludeFlagged = exclBox.checked;
            this.syncUrl();
        });
        const aggOn = el("input", { type: "checkbox" });
        aggOn.checked = s.agg !== null;
        const binPick = el("select", {});
        for (const bin of AGG_BINS)
            binPick.append(el("option", { value: bin }, bin));
        const statPick = el("select", {});
        for (const stat of AGG_STATS)
            statPick.append(el("option", { value: stat }, stat));
        binPick.value = s.agg?.bin ?? "day";
        statPick.value = s.agg?.stat ?? "mean";
        const aggSync = () => {
            s.agg = aggOn.checked
                ? { bin: binPick.value,
                    stat: statPick.value }
                : null;
            this.syncUrl();
        };
        for (const box of [aggOn, binPick, statPick])
            box.addEventListener("change", aggSync);
        const runBtn = el("button", {}, "Plot");
        runBtn.addEventListener("click", () => void this.run());
        this.controls.append(el("div", { class: "field" }, el("label", {}, "Series"), channelPick), el("div", { class: "field" }, el("label", {}, "Span (UTC)"), fromBox, el("span", {}, " to "), toBox), el("div", { class: "field" }, el("label", {}, "Time of day"), todOn, todStart, el("span", {}, "-"), todEnd, el("span", { class: "hint" }, "minutes local")), el("div", { class: "field" }, el("label", {}, "Clear-sky PAR >="), parOn, parValue), el("div", { class: "field" }, el("label", {}, "Exclude flagged"), exclBox), el("div", { class: "field" }, el("label", {}, "Aggregate"), aggOn, binPick, statPick), runBtn);
    }
    async run() {
        const problem = validateState(this.state);
        if (problem) {
            this.status.textContent = problem;
            this.status.className = "status error";
            return;
        }
        this.status.textContent = "Loading...";
        this.status.className = "status";
        try {
            const payloads = await Promise.all(toRequests(this.state).map(fetchSeries));
            const merged = { channels: {} };
            for (const p of payloads)
                Object.assign(merged.channels, p.channels);
            this.renderChart(merged);
        }
        catch (err) {
            this.status.className = "status error";
            this.status.textContent = err instanceof ApiError
                ? `${err.body.code}: ${err.body.message}`
                : String(err);
        }
    }
    renderChart(payload) {
        const ordered = {};
        for (const sel of this.state.series) {
            const key = responseKey(sel);
            if (payload.channels[key])
                ordered[key] = payload.channels[key];
        }
        const n = totalPoints(ordered);
        if (n === 0) {
            this.status.textContent = "0 points matched; nothing to plot.";
            this.status.className = "status";
            this.chartBox.replaceChildren();
            return;
        }
        const width = 880, height = 360, margin = 40;
        const scale = chartScale(ordered, width, height, margin);
        const svg = svgEl("svg", { width: String(width), height: String(height),
            viewBox: `0 0 ${width} ${height}` });
        svg.append(svgEl("rect", { x: "0", y: "0", width: String(width),
            height: String(height), fill: "#fcfcf8" }));
        const legend = el("div", { class: "legend" });
        let idx = 0;
        for (const [key, points] of Object.entries(ordered)) {
            const color = seriesColor(idx);
            for (const segment of toSegments(points)) {
                const d = segment.map((p, i) => `${i === 0 ? "M" : "L"}${scale.x(p.ts).toFixed(1)},${scale.y(p.value).toFixed(1)}`)
                    .join(" ");
                svg.append(svgEl("path", { d, fill: "none", stroke: color, "stroke-width": "1.6" }));
                if (segment.length === 1) {
                    svg.append(svgEl("circle", { cx: String(scale.x(segment[0].ts)),
                        cy: String(scale.y(segment[0].value)),
                        r: "2.4", fill: color }));
                }
            }
            legend.append(el("span", { class: "legend-item" }, el("span", { class: "swatch", style: `background:${color}` }), key));
            idx += 1;
        }
        svg.append(svgEl("text", { x: "6", y: "14", "font-size": "11" }));
        const yLo = svgEl("text", { x: "4", y: String(height - margin), "font-size": "11" });
        yLo.textContent = scale.vMin.toPrecision(4);
        const yHi = svgEl("text", { x: "4", y: String(margin), "font-size": "11" });
        yHi.textContent = scale.vMax.toPrecision(4);
        svg.append(yLo, yHi);
        this.chartBox.replaceChildren(svg, legend);
        this.status.textContent = `${n} points`;
    }
}
// ---------------------------------------------------------------- frames view
class FramesView {
    constructor() {
        this.controls = el("div", { class: "controls" });
        this.status = el("div", { class: "status" });
        this.stage = el("div", { class: "stage" });
        this.model = new AnimationModel(0);
        this.payload = null;
        this.timer = null;
        this.root = el("section", {}, this.controls, this.status, this.stage);
        this.renderControls();
    }
    renderControls() {
        const dep = el("input", { value: "", size: "16", placeholder: "deployment" });
        const variable = el("input", { value: "air_temp_C", size: "14" });
        const from = el("input", { value: "2024-03-01T06:00:00Z", size: "22" });
        const to = el("input", { value: "2024-03-02T06:00:00Z", size: "22" });
        const step = el("input", { value: "3600", size: "7" });
        const load = el("button", {}, "Load frames");
        load.addEventListener("click", () => void this.load(dep.value, variable.value, from.value, to.value, Number(step.value)));
        this.controls.append(el("div", { class: "field" }, el("label", {}, "Deployment"), dep, variable), el("div", { class: "field" }, el("label", {}, "Window"), from, el("span", {}, " to "), to, el("label", {}, " step s"), step), load);
    }
    async load(dep, variable, from, to, step) {
        this.status.textContent = "Loading...";
        this.status.className = "status";
        try {
            this.payload = await fetchFrames([
                ["deployment", dep], ["variable", variable],
                ["from", from], ["to", to], ["step", String(step)]
            ]);
        }
        catch (err) {
            this.status.className = "status error";
            this.status.textContent = err instanceof ApiError
                ? `${err.body.code}: ${err.body.message}` : String(err);
            return;
        }
        this.model = new AnimationModel(this.payload.frames.length);
        this.renderStage();
    }
    renderStage() {
        const payload = this.payload;
        if (!payload || payload.frames.length === 0) {
            this.status.textContent = "0 frames.";
            this.stage.replaceChildren();
            return;
        }
        const scrub = scrubberModel(payload);
        this.status.textContent = `${scrub.length} frames`;
        const valueCanvas = el("canvas", { width: "320", height: "320" });
        const relCanvas = el("canvas", { width: "320", height: "320" });
        const cursor = el("span", { class: "cursor" });
        const slider = el("input", { type: "range", min: "0",
            max: String(scrub.length - 1), value: "0",
            style: "width:320px" });
        const ramp = colorRamp(payload.vmin ?? 0, payload.vmax ?? 1);
        const draw = () => {
            const frame = payload.frames[this.model.index];
            slider.value = String(this.model.index);
            cursor.textContent = frame.ts;
            for (const [canvas, kind] of [[valueCanvas, "values"],
                [relCanvas, "reliability"]]) {
                const ctx = canvas.getContext("2d");
                const grid = payload.grid;
                const cw = canvas.width / grid.nx;
                const chn = canvas.height / grid.ny;
                ctx.clearRect(0, 0, canvas.width, canvas.height);
                for (let iy = 0; iy < grid.ny; iy++) {
                    for (let ix = 0; ix < grid.nx; ix++) {
                        const v = kind === "values" ? frame.values[iy][ix] : frame.reliability[iy][ix];
                        ctx.fillStyle = v === null ? "#ddd"
                            : kind === "values" ? ramp(v) : reliabilityColor(v);
                        // row 0 is the south edge; draw north-up
                        ctx.fillRect(ix * cw, canvas.height - (iy + 1) * chn, cw + 0.5, chn + 0.5);
                    }
                }
            }
        };
        slider.addEventListener("input", () => { this.model.seek(Number(slider.value)); draw(); });
        const playBtn = el("button", {}, "Play");
        playBtn.addEventListener("click", () => {
            const playing = this.model.toggle();
            playBtn.textContent = playing ? "Pause" : "Play";
            if (this.timer !== null) {
                clearInterval(this.timer);
                this.timer = null;
            }
            if (playing) {
                this.timer = setInterval(() => { this.model.tick(); draw(); }, 400);
            }
        });
        const back = el("button", {}, "<");
        back.addEventListener("click", () => { this.model.step(-1); draw(); });
        const fwd = el("button", {}, ">");
        fwd.addEventListener("click", () => { this.model.step(1); draw(); });
        this.stage.replaceChildren(el("div", { class: "panes" }, el("figure", {}, valueCanvas, el("figcaption", {}, "values")), el("figure", {}, relCanvas, el("figcaption", {}, "reliability"))), el("div", { class: "transport" }, playBtn, back, fwd, slider, cursor));
        draw();
    }
}
// ---------------------------------------------------------------- upload view
class UploadView {
    constructor() {
        const file = el("input", { type: "file" });
        const dep = el("input", { size: "16", placeholder: "deployment" });
        const user = el("input", { size: "12", value: "web" });
        const banner = el("div", { class: "status" });
        const table = el("div", {});
        const send = el("button", {}, "Upload");
        send.addEventListener("click", async () => {
            if (!file.files || file.files.length === 0) {
                banner.className = "status error";
                banner.textContent = "Choose a file first.";
                return;
            }
            banner.className = "status";
            banner.textContent = "Uploading...";
            const { status, body } = await uploadFile(file.files[0], dep.value, user.value);
            const outcome = uploadBanner(status, body);
            table.replaceChildren();
            if (outcome.kind === "success") {
                banner.className = "status ok";
                banner.textContent =
                    `Stored as ${outcome.uploadId}: ${outcome.rowsOk} rows ok, ` +
                        `${outcome.rowsRejected} rejected, ${outcome.written} records written` +
                        (outcome.warnings.length ? ` [${outcome.warnings.join("; ")}]` : "");
                if (outcome.rowsRejected > 0) {
                    const rows = errorTableRows(body.report);
                    const tbl = el("table", { class: "errors" }, el("tr", {}, el("th", {}, "line"), el("th", {}, "kind"), el("th", {}, "excerpt")));
                    for (const r of rows) {
                        tbl.append(el("tr", {}, el("td", {}, String(r.line)), el("td", {}, r.kind), el("td", {}, r.excerpt)));
                    }
                    table.append(tbl);
                }
            }
            else if (outcome.kind === "duplicate") {
                banner.className = "status warn";
                banner.textContent =
                    `Already ingested: these exact bytes are upload ${outcome.originalUploadId}.`;
            }
            else {
                banner.className = "status error";
                banner.textContent = `${outcome.code}: ${outcome.message}`;
            }
        });
        this.root = el("section", {}, el("div", { class: "field" }, el("label", {}, "File"), file), el("div", { class: "field" }, el("label", {}, "Deployment"), dep, el("label", {}, "User"), user), send, banner, table);
    }
}
// ---------------------------------------------------------------- shell
function mount() {
    const tabs = el("nav", {});
    const body = el("main", {});
    const series = new SeriesView();
    const frames = new FramesView();
    const upload = new UploadView();
    const views = [
        ["Series", series.root], ["Animation", frames.root], ["Upload", upload.root]
    ];
    for (const [name, view] of views) {
        const btn = el("button", {}, name);
        btn.addEventListener("click", () => body.replaceChildren(view));
        tabs.append(btn);
    }
    document.body.append(el("h1", {}, "envnet"), tabs, body);
    body.append(series.root);
    void series.init().catch(err => {
        series.root.prepend(el("div", { class: "status error" }, String(err)));
    });
}
mount();
