/** Executes a draw list on a CanvasRenderingContext2D. The only module that
 *  touches canvas APIs, so everything upstream stays testable in node. */

import type { DrawCommand, DrawList } from "./render.js";

export function execute(ctx: CanvasRenderingContext2D, list: DrawList,
                        width: number, height: number): void {
  let bannerRow = 0;
  for (const cmd of list.commands) {
    switch (cmd.op) {
      case "clear":
        ctx.fillStyle = cmd.color;
        ctx.fillRect(0, 0, width, height);
        bannerRow = 0;
        break;
      case "circle":
        ctx.beginPath();
        ctx.arc(cmd.x, cmd.y, Math.max(0.5, cmd.r), 0, 2 * Math.PI);
        if (cmd.fill) {
          ctx.fillStyle = cmd.fill;
          ctx.fill();
        }
        if (cmd.stroke) {
          ctx.strokeStyle = cmd.stroke;
          ctx.lineWidth = 1;
          ctx.stroke();
        }
        break;
      case "line":
        ctx.beginPath();
        ctx.moveTo(cmd.x1, cmd.y1);
        ctx.lineTo(cmd.x2, cmd.y2);
        ctx.strokeStyle = cmd.color;
        ctx.lineWidth = cmd.width ?? 1;
        ctx.stroke();
        break;
      case "poly": {
        ctx.beginPath();
        const [first, ...rest] = cmd.points;
        if (!first) break;
        ctx.moveTo(first[0], first[1]);
        for (const p of rest) ctx.lineTo(p[0], p[1]);
        ctx.closePath();
        if (cmd.fill) {
          ctx.fillStyle = cmd.fill;
          ctx.fill();
        }
        ctx.strokeStyle = cmd.color;
        ctx.stroke();
        break;
      }
      case "text":
        ctx.fillStyle = cmd.color;
        ctx.font = `${cmd.size ?? 11}px sans-serif`;
        ctx.fillText(cmd.text, cmd.x, cmd.y);
        break;
      case "banner":
        ctx.fillStyle = cmd.color;
        ctx.font = "bold 16px sans-serif";
        ctx.fillText(cmd.text, 12, 24 + 20 * bannerRow);
        bannerRow += 1;
        break;
      case "watermark":
        ctx.fillStyle = "#888";
        ctx.font = "10px monospace";
        ctx.fillText(`tick ${cmd.tick}`, 6, height - 6);
        break;
    }
  }
}
